#include "inhibitor/train.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "inhibitor/autograd.hpp"
#include "inhibitor/errors.hpp"

namespace inhibitor {

namespace {

// Independent generator streams derived from one user seed.
std::mt19937_64 stream(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    purpose};
  return std::mt19937_64(seq);
}

enum StreamId : std::uint32_t { kInit = 1, kTrain = 2, kTest = 3 };

Tensor2D uniform(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor2D t(rows, cols);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t t = 0;
  std::vector<Tensor2D> m, v;

  void step(std::vector<Tensor2D*>& params, const std::vector<Tensor2D>& grads) {
    if (m.empty()) {
      for (auto* p : params) {
        m.emplace_back(p->rows(), p->cols());
        v.emplace_back(p->rows(), p->cols());
      }
    }
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i]->data();
      auto g = grads[i].data();
      auto mi = m[i].data();
      auto vi = v[i].data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        mi[j] = beta1 * mi[j] + (1.0 - beta1) * g[j];
        vi[j] = beta2 * vi[j] + (1.0 - beta2) * g[j] * g[j];
        p[j] -= lr * (mi[j] / c1) / (std::sqrt(vi[j] / c2) + eps);
      }
    }
  }
};

std::vector<Tensor2D*> parameters(AddingModel& m) {
  return {&m.w_in,     &m.b_in,     &m.block.wq, &m.block.wk, &m.block.wv, &m.block.wo,
          &m.block.w1, &m.block.b1, &m.block.w2, &m.block.b2, &m.w_head,   &m.b_head};
}

// Batched forward on the tape. Rows of every position-wise op are the
// stacked sequences; attention runs per sequence.
ag::Var forward(ag::Graph& g, const std::vector<ag::Var>& p, const Tensor2D& inputs,
                std::size_t seq_len, const AttentionConfig& attn) {
  const ag::Var x = g.leaf(inputs);
  const ag::Var e = ag::add_row(ag::matmul(x, p[0]), p[1]);
  const ag::Var en = ag::layer_norm(e);
  const ag::Var q = ag::matmul(en, p[2]);
  const ag::Var k = ag::matmul(en, p[3]);
  const ag::Var v = ag::matmul(en, p[4]);
  const std::size_t batch = inputs.rows() / seq_len;
  std::vector<ag::Var> heads;
  heads.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t lo = b * seq_len, hi = lo + seq_len;
    const ag::Var qs = ag::slice_rows(q, lo, hi);
    const ag::Var ks = ag::slice_rows(k, lo, hi);
    const ag::Var vs = ag::slice_rows(v, lo, hi);
    if (attn.mechanism == Mechanism::DotProd) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(qs.cols()));
      heads.push_back(ag::matmul(ag::softmax_rows(ag::scale(ag::matmul_nt(qs, ks), inv)), vs));
    } else {
      const ag::Var z =
          ag::shift_scores(ag::manhattan_scores(qs, ks, attn.score_scale), attn.score_shift);
      heads.push_back(attn.signed_values ? ag::signed_inhibit_fused(vs, z)
                                         : ag::inhibit_fused(vs, z));
    }
  }
  const ag::Var y = ag::add(e, ag::matmul(ag::concat_rows(heads), p[5]));
  const ag::Var out = ag::add(y, ag::ffn(ag::layer_norm(y), p[6], p[7], p[8], p[9]));
  const ag::Var pooled = ag::mean_pool(out, seq_len);
  return ag::add_row(ag::matmul(pooled, p[10]), p[11]);
}

}  // namespace

AddingGenerator::AddingGenerator(std::size_t seq_len, std::uint64_t seed)
    : seq_len_(seq_len), rng_(seed) {
  if (seq_len < 2) throw ConfigError("adding problem: sequence length must be >= 2");
}

AddingExample AddingGenerator::next() {
  AddingExample ex;
  ex.values.resize(seq_len_);
  ex.markers.assign(seq_len_, 0.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (double& v : ex.values) v = unit(rng_);
  const std::size_t p = std::uniform_int_distribution<std::size_t>(0, seq_len_ - 1)(rng_);
  std::size_t q = std::uniform_int_distribution<std::size_t>(0, seq_len_ - 2)(rng_);
  if (q >= p) ++q;
  ex.markers[p] = 1.0;
  ex.markers[q] = 1.0;
  ex.target = ex.values[p] + ex.values[q];
  return ex;
}

std::vector<AddingExample> AddingGenerator::take(std::size_t count) {
  std::vector<AddingExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(next());
  return out;
}

void TrainConfig::validate() const {
  if (seq_len < 2) throw ConfigError("train: seq_len must be >= 2");
  if (batch == 0 || model_dim == 0 || hidden_dim == 0 || test_size == 0 || log_every == 0) {
    throw ConfigError("train: batch, dims, test_size and log_every must be positive");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
  if (!(score_shift >= 0.0)) throw ConfigError("train: score shift must be >= 0");
}

AttentionConfig attention_config_for(const TrainConfig& cfg) {
  AttentionConfig a = AttentionConfig::defaults(cfg.seq_len, cfg.model_dim, cfg.mechanism);
  a.score_shift = cfg.score_shift;
  a.signed_values = cfg.signed_values;
  return a;
}

AddingModel AddingModel::init(const TrainConfig& cfg, std::mt19937_64& rng) {
  const std::size_t d = cfg.model_dim, h = cfg.hidden_dim;
  const double in_bound = 1.0 / std::sqrt(2.0);
  const double d_bound = 1.0 / std::sqrt(static_cast<double>(d));
  const double h_bound = 1.0 / std::sqrt(static_cast<double>(h));
  AddingModel m;
  m.w_in = uniform(2, d, in_bound, rng);
  m.b_in = uniform(1, d, in_bound, rng);
  m.block.wq = uniform(d, d, d_bound, rng);
  m.block.wk = uniform(d, d, d_bound, rng);
  m.block.wv = uniform(d, d, d_bound, rng);
  m.block.wo = uniform(d, d, d_bound, rng);
  m.block.w1 = uniform(h, d, d_bound, rng);
  m.block.b1 = uniform(1, h, d_bound, rng);
  m.block.w2 = uniform(h, d, h_bound, rng);
  m.block.b2 = uniform(1, d, h_bound, rng);
  m.w_head = Tensor2D(d, 1);
  m.b_head = Tensor2D(1, 1, 1.0);
  return m;
}

Tensor2D adding_inputs(const AddingExample& ex) {
  Tensor2D x(ex.values.size(), 2);
  for (std::size_t i = 0; i < ex.values.size(); ++i) {
    x(i, 0) = ex.values[i];
    x(i, 1) = ex.markers[i];
  }
  return x;
}

double AddingModel::predict(const AddingExample& ex, const AttentionConfig& attn) const {
  const Tensor2D e = add_row(matmul(adding_inputs(ex), w_in), b_in);
  const Tensor2D out = transformer_block(e, block, attn);
  const Tensor2D pooled = scale(colsum(out), 1.0 / static_cast<double>(out.rows()));
  return matmul(pooled, w_head)(0, 0) + b_head(0, 0);
}

double evaluate_mse(const AddingModel& model, const std::vector<AddingExample>& data,
                    const AttentionConfig& attn) {
  double total = 0.0;
  for (const auto& ex : data) {
    const double e = model.predict(ex, attn) - ex.target;
    total += e * e;
  }
  return total / static_cast<double>(data.size());
}

TrainReport train(const TrainConfig& cfg) { return train(cfg, nullptr); }

TrainReport train(const TrainConfig& cfg, AddingModel* trained) {
  cfg.validate();
  const AttentionConfig attn = attention_config_for(cfg);
  auto init_rng = stream(cfg.seed, kInit);
  AddingModel model = AddingModel::init(cfg, init_rng);
  AddingGenerator train_data(cfg.seq_len, stream(cfg.seed, kTrain)());
  const auto test = AddingGenerator(cfg.seq_len, stream(cfg.seed, kTest)()).take(cfg.test_size);

  TrainReport report;
  report.config = cfg;
  double mean = 0.0;
  for (const auto& ex : test) mean += ex.target;
  mean /= static_cast<double>(test.size());
  for (const auto& ex : test) report.test_target_variance += (ex.target - mean) * (ex.target - mean);
  report.test_target_variance /= static_cast<double>(test.size());

  Adam opt;
  opt.lr = cfg.learning_rate;
  auto params = parameters(model);
  Tensor2D inputs(cfg.batch * cfg.seq_len, 2);
  Tensor2D targets(cfg.batch, 1);

  auto next_batch = [&] {
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const AddingExample ex = train_data.next();
      for (std::size_t i = 0; i < cfg.seq_len; ++i) {
        inputs(b * cfg.seq_len + i, 0) = ex.values[i];
        inputs(b * cfg.seq_len + i, 1) = ex.markers[i];
      }
      targets(b, 0) = ex.target;
    }
  };

  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    const bool log_now = step % cfg.log_every == 0 || step == cfg.steps;
    if (log_now) {
      double train_loss;
      if (loss_count > 0) {
        train_loss = loss_sum / static_cast<double>(loss_count);
      } else {
        // Step 0: loss of the untrained model on a fresh batch.
        next_batch();
        ag::Graph g;
        std::vector<ag::Var> p;
        for (auto* t : params) p.push_back(g.leaf(*t));
        train_loss = ag::mse_loss(forward(g, p, inputs, cfg.seq_len, attn), targets).value()(0, 0);
      }
      report.records.push_back({step, train_loss, evaluate_mse(model, test, attn)});
      loss_sum = 0.0;
      loss_count = 0;
    }
    if (step == cfg.steps) break;

    next_batch();
    ag::Graph g;
    std::vector<ag::Var> p;
    p.reserve(params.size());
    for (auto* t : params) p.push_back(g.leaf(*t));
    const ag::Var loss = ag::mse_loss(forward(g, p, inputs, cfg.seq_len, attn), targets);
    const double l = loss.value()(0, 0);
    if (!std::isfinite(l)) {
      throw TrainingDiverged("training diverged at step " + std::to_string(step), step);
    }
    g.backward(loss);
    std::vector<Tensor2D> grads;
    grads.reserve(p.size());
    for (const auto& v : p) grads.push_back(v.grad());
    opt.step(params, grads);
    loss_sum += l;
    ++loss_count;
  }
  report.final_test_mse = report.records.back().test_mse;
  if (trained) *trained = std::move(model);
  return report;
}

void write_train_csv(std::ostream& os, const TrainReport& report) {
  os << "step,train_loss,test_mse\n";
  const auto old = os.precision(10);
  for (const auto& r : report.records) {
    os << r.step << ',' << r.train_loss << ',' << r.test_mse << '\n';
  }
  os.precision(old);
}

}  // namespace inhibitor
