#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "inhibitor/attention.hpp"

namespace inhibitor {

// One adding-problem sequence: the target is the sum of the two values whose
// marker is set.
struct AddingExample {
  std::vector<double> values;   // uniform in [0, 1)
  std::vector<double> markers;  // exactly two ones
  double target = 0.0;
};

// Deterministic stream of adding-problem examples.
class AddingGenerator {
 public:
  AddingGenerator(std::size_t seq_len, std::uint64_t seed);
  AddingExample next();
  std::vector<AddingExample> take(std::size_t count);

 private:
  std::size_t seq_len_;
  std::mt19937_64 rng_;
};

struct TrainConfig {
  std::size_t seq_len = 20;
  std::size_t steps = 2000;
  std::size_t batch = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  Mechanism mechanism = Mechanism::Inhibitor;
  std::size_t model_dim = 32;
  std::size_t hidden_dim = 64;
  double score_shift = 0.5;
  bool signed_values = false;
  std::size_t test_size = 1000;
  std::size_t log_every = 100;

  void validate() const;
};

struct TrainRecord {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean batch loss since the previous record
  double test_mse = 0.0;
};

struct TrainReport {
  TrainConfig config;
  std::vector<TrainRecord> records;
  double final_test_mse = 0.0;
  double test_target_variance = 0.0;  // MSE of predicting the test-set mean
};

/// Model parameters: 2-channel input projection to model_dim, one
/// pre-normalization attention block, mean pooling over positions, scalar
/// head.
struct AddingModel {
  Tensor2D w_in, b_in;  // 2 x d, 1 x d
  BlockWeights block;
  Tensor2D w_head, b_head;  // d x 1, 1 x 1

  // Uniform +-1/sqrt(fan_in), except the head: zero weights and a bias at
  // the target mean 1.0, so the untrained model predicts the mean.
  static AddingModel init(const TrainConfig& cfg, std::mt19937_64& rng);

  // Forward pass through the float reference (attention-ref) ops.
  double predict(const AddingExample& ex, const AttentionConfig& attn) const;
};

AttentionConfig attention_config_for(const TrainConfig& cfg);

// Seq_len x 2 matrix of (value, marker) rows.
Tensor2D adding_inputs(const AddingExample& ex);

double evaluate_mse(const AddingModel& model, const std::vector<AddingExample>& data,
                    const AttentionConfig& attn);

// Throws TrainingDiverged if a batch loss becomes non-finite.
TrainReport train(const TrainConfig& cfg);
TrainReport train(const TrainConfig& cfg, AddingModel* trained);

// "step,train_loss,test_mse" followed by one line per record.
void write_train_csv(std::ostream& os, const TrainReport& report);

}  // namespace inhibitor
