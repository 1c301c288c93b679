#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "ecodrive/binary_io.hpp"
#include "ecodrive/mlp.hpp"

namespace ecodrive {

void TrainConfig::validate() const {
  if (batch == 0 || epoch_sample == 0) throw DomainError("batch and epoch_sample must be positive");
  if (epoch_sample % batch != 0) throw DomainError("batch must divide epoch_sample");
  if (patience < 1) throw DomainError("patience must be at least 1");
  if (max_epochs < 1) throw DomainError("max_epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw DomainError("learning_rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw DomainError("lr_decay must be in (0, 1]");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epoch_sample", c.epoch_sample}, {"batch", c.batch},
          {"max_epochs", c.max_epochs},     {"patience", c.patience},
          {"min_delta", c.min_delta},       {"seed", c.seed},
          {"target_train_mse", c.target_train_mse}, {"max_test_rows", c.max_test_rows},
          {"learning_rate", c.learning_rate}, {"lr_decay", c.lr_decay}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  TrainConfig c;
  c.epoch_sample = doc.value("epoch_sample", c.epoch_sample);
  c.batch = doc.value("batch", c.batch);
  c.max_epochs = doc.value("max_epochs", c.max_epochs);
  c.patience = doc.value("patience", c.patience);
  c.min_delta = doc.value("min_delta", c.min_delta);
  c.seed = doc.value("seed", c.seed);
  c.target_train_mse = doc.value("target_train_mse", c.target_train_mse);
  c.max_test_rows = doc.value("max_test_rows", c.max_test_rows);
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.lr_decay = doc.value("lr_decay", c.lr_decay);
  c.validate();
  return c;
}

namespace {

using MatrixF = Mlp::Matrix;

constexpr Eigen::Index kChunk = 8192;

void gather(const Dataset& ds, std::span<const std::uint32_t> idx, MatrixF& x, MatrixF& y) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  x.resize(static_cast<Eigen::Index>(kNumFeatures), n);
  y.resize(1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const float* r = ds.row(idx[static_cast<std::size_t>(j)]);
    for (std::size_t i = 0; i < kNumFeatures; ++i) x(static_cast<Eigen::Index>(i), j) = r[i];
    y(0, j) = r[kNumFeatures];
  }
}

double mse_over(const Mlp& net, const Dataset& ds, std::span<const std::uint32_t> idx) {
  double sum = 0.0;
  MatrixF x, y;
  for (std::size_t start = 0; start < idx.size(); start += kChunk) {
    const std::size_t n = std::min<std::size_t>(kChunk, idx.size() - start);
    gather(ds, idx.subspan(start, n), x, y);
    const MatrixF out = net.forward(x);
    sum += static_cast<double>((out - y).template cast<double>().squaredNorm());
  }
  return idx.empty() ? 0.0 : sum / static_cast<double>(idx.size());
}

std::vector<std::uint32_t> subset(std::size_t n, std::size_t max_rows, std::uint64_t seed) {
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  if (max_rows == 0 || n <= max_rows) return idx;
  Rng rng(mix64(seed ^ 0x7e57ULL));
  for (std::size_t i = 0; i < max_rows; ++i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(max_rows);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

double evaluate_mse(const Mlp& net, const Dataset& data, std::size_t max_rows) {
  const auto idx = subset(data.size(), max_rows, 0);
  return mse_over(net, data, idx);
}

TrainResult train(Mlp& net, const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg) {
  cfg.validate();
  if (!train_set.normalized || !test_set.normalized) throw DatasetError("training data must be normalized");
  if (!(train_set.scalers == test_set.scalers)) throw DatasetError("train and test sets use different scalers");
  if (train_set.size() == 0 || test_set.size() == 0) throw DatasetError("empty training or test set");
  if (static_cast<std::size_t>(net.sizes().front()) != kNumFeatures || net.sizes().back() != 1) {
    throw DomainError("network shape does not match the feature vector");
  }
  net.set_scalers(train_set.scalers);

  const std::size_t n = train_set.size();
  const bool replace = n < cfg.epoch_sample;
  if (replace) spdlog::warn("training set has {} rows < epoch sample {}; sampling with replacement", n, cfg.epoch_sample);
  Rng rng(cfg.seed);
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  std::vector<std::uint32_t> epoch_idx(cfg.epoch_sample);
  const auto test_idx = subset(test_set.size(), cfg.max_test_rows, cfg.seed);

  AdamState<float> adam(net);
  Mlp::Cache cache;
  MlpGradients<float> grads;
  MatrixF x, y;
  TrainResult result;
  result.best_test_loss = std::numeric_limits<double>::infinity();
  result.initial_test_loss = mse_over(net, test_set, test_idx);
  Mlp best = net;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < cfg.epoch_sample; ++i) {
      if (replace) {
        epoch_idx[i] = static_cast<std::uint32_t>(uniform_int(rng, 0, static_cast<std::int64_t>(n - 1)));
      } else {
        const auto j = static_cast<std::size_t>(
            uniform_int(rng, static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
        std::swap(perm[i], perm[j]);
        epoch_idx[i] = perm[i];
      }
    }
    adam.lr = cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch - 1));
    double running = 0.0;
    const std::size_t batches = cfg.epoch_sample / cfg.batch;
    for (std::size_t b = 0; b < batches; ++b) {
      gather(train_set, std::span<const std::uint32_t>(epoch_idx).subspan(b * cfg.batch, cfg.batch), x, y);
      const MatrixF out = net.forward_train(x, &rng, cache);
      running += net.backward(cache, out, y, grads);
      adam_step(net, grads, adam);
    }
    EpochLog log{epoch, running / static_cast<double>(batches), mse_over(net, test_set, test_idx)};
    result.history.push_back(log);
    spdlog::info("epoch {} train_loss {:.6g} test_loss {:.6g}", epoch, log.train_loss, log.test_loss);

    if (log.test_loss < result.best_test_loss - cfg.min_delta) {
      result.best_test_loss = log.test_loss;
      result.best_epoch = epoch;
      best = net;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (cfg.target_train_mse > 0.0) {
      const double full = evaluate_mse(net, train_set);
      if (full <= cfg.target_train_mse) {
        spdlog::info("training MSE {:.6g} reached target {:.6g}", full, cfg.target_train_mse);
        result.reached_target = true;
        result.final_train_mse = full;
        return result;
      }
    }
    if (since_best >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  net = best;
  result.final_train_mse = evaluate_mse(net, train_set, cfg.max_test_rows);
  return result;
}

void predict_costs(const Mlp& net, std::span<const FeatureArray> features, std::span<double> out) {
  if (!net.scalers()) throw DomainError("network has no scalers attached");
  const Scalers& sc = *net.scalers();
  MatrixF x;
  for (std::size_t start = 0; start < features.size(); start += kChunk) {
    const std::size_t n = std::min<std::size_t>(kChunk, features.size() - start);
    x.resize(static_cast<Eigen::Index>(kNumFeatures), static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < kNumFeatures; ++i) {
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            static_cast<float>(sc.normalize_feature(i, features[start + j][i]));
      }
    }
    const MatrixF y = net.forward(x);
    for (std::size_t j = 0; j < n; ++j) {
      out[start + j] = std::max(0.0, sc.denormalize_target(static_cast<double>(y(0, static_cast<Eigen::Index>(j)))));
    }
  }
}

double predict_cost(const Mlp& net, const FeatureVector& f) {
  const FeatureArray a = f.as_array();
  double out = 0.0;
  predict_costs(net, std::span<const FeatureArray>(&a, 1), std::span<double>(&out, 1));
  return out;
}

namespace {
constexpr std::string_view kModelMagic = "EDNN";

std::size_t parameter_count(const std::vector<int>& sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    n += static_cast<std::size_t>(sizes[l + 1]) * static_cast<std::size_t>(sizes[l] + 1);
  }
  return n;
}
}  // namespace

std::size_t model_file_bytes(const std::vector<int>& sizes) {
  return kModelMagic.size() + sizeof(std::uint32_t) + sizeof(std::uint64_t) + sizeof(std::uint32_t) +
         sizeof(std::uint32_t) * sizes.size() + sizeof(double) + sizeof(std::uint8_t) +
         sizeof(double) * (2 * kNumFeatures + 2) + sizeof(float) * parameter_count(sizes) + sizeof(std::uint64_t);
}

void save_mlp(const Mlp& net, const std::string& path) {
  BinaryWriter w(path);
  w.put_bytes(kModelMagic);
  w.put(kModelVersion);
  w.put(static_cast<std::uint64_t>(model_file_bytes(net.sizes())));
  w.put(static_cast<std::uint32_t>(net.sizes().size()));
  for (int n : net.sizes()) w.put(static_cast<std::uint32_t>(n));
  w.put(net.dropout_rate());
  const Scalers sc = net.scalers().value_or(Scalers{});
  w.put(static_cast<std::uint8_t>(net.scalers().has_value()));
  w.put_span(std::span<const double>(sc.feature_min));
  w.put_span(std::span<const double>(sc.feature_max));
  w.put(sc.target_min);
  w.put(sc.target_max);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    w.put_span(std::span<const float>(net.weight(l).data(), static_cast<std::size_t>(net.weight(l).size())));
    w.put_span(std::span<const float>(net.bias(l).data(), static_cast<std::size_t>(net.bias(l).size())));
  }
  w.finish();
}

Mlp load_mlp(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic(kModelMagic);
  if (const auto v = r.get<std::uint32_t>(); v != kModelVersion) {
    throw FormatError("'" + path + "' has unsupported model version " + std::to_string(v));
  }
  const auto total = r.get<std::uint64_t>();
  if (total != r.size()) throw FormatError("'" + path + "' size field does not match the file");
  const auto nsizes = r.get<std::uint32_t>();
  if (nsizes < 2 || nsizes > 64) throw FormatError("'" + path + "' has an implausible layer count");
  std::vector<int> sizes(nsizes);
  for (auto& n : sizes) n = static_cast<int>(r.get<std::uint32_t>());
  if (model_file_bytes(sizes) != total) throw FormatError("'" + path + "' layer sizes do not match its size");
  const double dropout = r.get<double>();
  Mlp net(sizes, dropout);
  const bool has_scalers = r.get<std::uint8_t>() != 0;
  Scalers sc;
  r.get_span(std::span<double>(sc.feature_min));
  r.get_span(std::span<double>(sc.feature_max));
  sc.target_min = r.get<double>();
  sc.target_max = r.get<double>();
  if (has_scalers) net.set_scalers(sc);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    r.get_span(std::span<float>(net.weight(l).data(), static_cast<std::size_t>(net.weight(l).size())));
    r.get_span(std::span<float>(net.bias(l).data(), static_cast<std::size_t>(net.bias(l).size())));
  }
  r.verify_checksum();
  return net;
}

std::string to_csv(const std::vector<EpochLog>& history) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,train_loss,test_loss\n";
  for (const auto& e : history) out << e.epoch << ',' << e.train_loss << ',' << e.test_loss << '\n';
  return out.str();
}

}  // namespace ecodrive
