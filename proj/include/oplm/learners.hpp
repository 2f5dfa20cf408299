#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "oplm/baselines.hpp"
#include "oplm/config.hpp"
#include "oplm/oplstm.hpp"
#include "oplm/plain_lstm.hpp"

namespace oplm {

/// One episode on a tape: the mean query loss and the raw query outputs
/// (regression values, or logits for classification).
struct EpisodeResult {
  Var loss;
  Var outputs;
};

/// Common face of the four meta-learners for the training loop. Parameters
/// are bound in registration order, so tape gradients line up with
/// parameters() after skipping frozen entries.
class Learner {
 public:
  virtual ~Learner() = default;

  virtual LearnerKind kind() const = 0;
  virtual Parameters& parameters() = 0;
  virtual const Parameters& parameters() const = 0;
  /// Entries never bound as tape parameters.
  virtual std::vector<bool> frozen() const { return std::vector<bool>(parameters().size(), false); }

  virtual EpisodeResult run(Tape& tape, const Task& task, bool trainable) const = 0;
};

struct ProblemDims {
  std::size_t input = 1;
  std::size_t output = 1;
  TaskKind kind = TaskKind::Regression;
};

ProblemDims problem_dims(const RunConfig& config, std::size_t image_pixels = 0);

class PlainLstmLearner final : public Learner {
 public:
  PlainLstmLearner(PlainLstmConfig config, Rng& rng) : model_(std::move(config), rng) {}

  LearnerKind kind() const override { return LearnerKind::PlainLstm; }
  Parameters& parameters() override { return model_.parameters(); }
  const Parameters& parameters() const override { return model_.parameters(); }
  EpisodeResult run(Tape& tape, const Task& task, bool trainable) const override;

  const PlainLstmModel& model() const { return model_; }

 private:
  PlainLstmModel model_;
};

class OpLstmLearner final : public Learner {
 public:
  OpLstmLearner(OpLstmConfig config, Rng& rng) : model_(std::move(config), rng) {}

  LearnerKind kind() const override { return LearnerKind::OpLstm; }
  Parameters& parameters() override { return model_.parameters(); }
  const Parameters& parameters() const override { return model_.parameters(); }
  std::vector<bool> frozen() const override;
  EpisodeResult run(Tape& tape, const Task& task, bool trainable) const override;

  OpLstmModel& model() { return model_; }
  const OpLstmModel& model() const { return model_; }

 private:
  OpLstmModel model_;
};

/// Stores MLP weights as W.<l> and b.<l>.
class MamlLearner final : public Learner {
 public:
  MamlLearner(MlpConfig net, MamlOptions options, Rng& rng);

  LearnerKind kind() const override { return LearnerKind::Maml; }
  Parameters& parameters() override { return params_; }
  const Parameters& parameters() const override { return params_; }
  EpisodeResult run(Tape& tape, const Task& task, bool trainable) const override;

  const MlpConfig& net() const { return net_; }
  MlpVars bind(Tape& tape, bool trainable) const;

 private:
  MlpConfig net_;
  MamlOptions options_;
  Parameters params_;
};

/// Embedding MLP (ReLU hidden layers, linear last layer) with a nearest-prototype head.
class ProtoNetLearner final : public Learner {
 public:
  ProtoNetLearner(MlpConfig embedding, Rng& rng);

  LearnerKind kind() const override { return LearnerKind::ProtoNet; }
  Parameters& parameters() override { return params_; }
  const Parameters& parameters() const override { return params_; }
  EpisodeResult run(Tape& tape, const Task& task, bool trainable) const override;

 private:
  MlpConfig net_;
  Parameters params_;
};

std::unique_ptr<Learner> make_learner(const RunConfig& config, const ProblemDims& dims, Rng& rng);

}  // namespace oplm
