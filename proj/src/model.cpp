#include "mtl/model.hpp"

#include <algorithm>

#include "mtl/error.hpp"

namespace mtl {

MultitaskModel::MultitaskModel(Sequential trunk, std::vector<Sequential> heads, std::vector<LossKind> losses)
    : trunk_(std::move(trunk)), heads_(std::move(heads)), losses_(std::move(losses)) {
  if (heads_.empty()) throw ConfigError("multitask model needs at least one head");
  if (losses_.size() != heads_.size()) throw ConfigError("multitask model needs one loss kind per head");
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    if (heads_[i].input_shape() != trunk_.output_shape()) {
      throw ShapeError("head " + std::to_string(i) + " expects " + to_string(heads_[i].input_shape()) +
                       " but the trunk produces " + to_string(trunk_.output_shape()));
    }
  }
  const auto trunk_params = trunk_.parameter_tensors();
  for (const auto& head : heads_) {
    for (const auto& p : head.parameter_tensors()) {
      for (const auto& q : trunk_params) {
        if (p.same_as(q)) throw ConfigError("head and trunk parameters must be disjoint");
      }
    }
  }
}

MultitaskModel MultitaskModel::reference(std::size_t tasks, std::uint64_t seed, std::size_t classes) {
  Rng rng(seed);
  Sequential trunk = make_reference_trunk(rng);
  std::vector<Sequential> heads;
  for (std::size_t i = 0; i < tasks; ++i) heads.push_back(make_reference_head(trunk.output_shape()[0], classes, rng));
  return MultitaskModel(std::move(trunk), std::move(heads),
                        std::vector<LossKind>(tasks, LossKind::kSoftmaxCrossEntropy));
}

const Sequential& MultitaskModel::head(std::size_t task) const {
  if (task >= heads_.size()) {
    throw Error("task " + std::to_string(task) + " out of range for " + std::to_string(heads_.size()) + " tasks");
  }
  return heads_[task];
}

LossKind MultitaskModel::loss_kind(std::size_t task) const {
  head(task);
  return losses_[task];
}

Tensor MultitaskModel::forward_head(Graph& g, const Tensor& features, std::size_t task) const {
  return forward(g, head(task), features);
}

Tensor MultitaskModel::forward_task(Graph& g, const Tensor& x, std::size_t task, Tensor* trunk_tap) const {
  head(task);
  Tensor features = forward(g, trunk_, x);
  if (trunk_tap) {
    features = ops::reshape(g, features, features.shape());
    *trunk_tap = features;
  }
  return forward_head(g, features, task);
}

Tensor MultitaskModel::head_loss(Graph& g, const Tensor& features, const MultiTaskBatch& batch,
                                 std::size_t task) const {
  Tensor out = forward_head(g, features, task);
  switch (loss_kind(task)) {
    case LossKind::kSoftmaxCrossEntropy:
      if (task >= batch.labels.size()) throw Error("batch carries no labels for task " + std::to_string(task));
      return ops::softmax_cross_entropy(g, out, batch.labels[task]);
    case LossKind::kL1:
      if (task >= batch.labels.size() || batch.labels[task].size() != out.size()) {
        throw Error("batch carries no regression targets for task " + std::to_string(task));
      } else {
        std::vector<double> target(batch.labels[task].begin(), batch.labels[task].end());
        return ops::l1_loss(g, out, Tensor::from(out.shape(), std::move(target)));
      }
  }
  throw Error("unknown loss kind");
}

Tensor MultitaskModel::task_loss(Graph& g, const MultiTaskBatch& batch, std::size_t task, Tensor* trunk_tap) const {
  head(task);
  Tensor features = forward(g, trunk_, batch.x);
  if (trunk_tap) {
    features = ops::reshape(g, features, features.shape());
    *trunk_tap = features;
  }
  return head_loss(g, features, batch, task);
}

ParameterList MultitaskModel::parameters() const {
  ParameterList out = trunk_.parameters("trunk");
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    auto h = heads_[i].parameters("head" + std::to_string(i));
    out.insert(out.end(), h.begin(), h.end());
  }
  return out;
}

ParamPartition MultitaskModel::partition() const {
  ParamPartition p;
  p.shared = trunk_.parameters("trunk");
  for (std::size_t i = 0; i < heads_.size(); ++i) p.heads.push_back(heads_[i].parameters("head" + std::to_string(i)));
  return p;
}

namespace {
Sequential deep_copy(const Sequential& s) {
  std::vector<Layer> layers = s.layers();
  for (auto& l : layers) {
    if (!l.has_parameters()) continue;
    l.weight = l.weight.detached(true);
    l.bias = l.bias.detached(true);
  }
  return Sequential(s.input_shape(), std::move(layers));
}
}  // namespace

MultitaskModel MultitaskModel::clone() const {
  std::vector<Sequential> heads;
  for (const auto& h : heads_) heads.push_back(deep_copy(h));
  return MultitaskModel(deep_copy(trunk_), std::move(heads), losses_);
}

ParamPartition partition_params(const MultitaskModel& model) { return model.partition(); }

SharedSnapshot SharedSnapshot::capture(std::span<const Parameter> params) {
  SharedSnapshot s;
  for (const auto& p : params) s.values_.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return s;
}

void SharedSnapshot::restore(std::span<const Parameter> params) const {
  if (params.size() != values_.size()) throw Error("snapshot restore: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    if (t.size() != values_[i].size()) throw ShapeError("snapshot restore: '" + params[i].name + "' changed size");
    auto dst = t.mutable_data();
    std::copy(values_[i].begin(), values_[i].end(), dst.begin());
  }
}

}  // namespace mtl
