#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "capmeter/checkpoint.hpp"
#include "capmeter/nn.hpp"
#include "capmeter/rng.hpp"

namespace capmeter {

enum class InitScheme { uniform_fan_in, gaussian };

inline std::string to_string(InitScheme scheme) {
  return scheme == InitScheme::uniform_fan_in ? "uniform_fan_in" : "gaussian";
}

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  double stop_loss = 0.01;
  std::size_t max_epochs = 1000;
  std::uint64_t seed = 0;
  InitScheme init = InitScheme::uniform_fan_in;
  double init_sigma = 0.05;  // used only by the gaussian scheme
  bool shuffle = true;

  void validate() const {
    if (!(lr >= 0.0)) throw std::invalid_argument("TrainConfig: lr < 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw std::invalid_argument("TrainConfig: momentum outside [0,1)");
    if (batch_size < 1)
      throw std::invalid_argument("TrainConfig: batch_size < 1");
    if (!(stop_loss > 0.0))
      throw std::invalid_argument("TrainConfig: stop_loss <= 0");
  }
};

struct TrainReport {
  std::size_t epochs_run = 0;
  double final_train_cross_entropy = 0.0;
  bool reached_stop = false;
  double wall_time_s = 0.0;
  std::vector<double> loss_curve;
};

inline nlohmann::ordered_json report_to_json(const TrainReport& r) {
  nlohmann::ordered_json j;
  j["epochs_run"] = r.epochs_run;
  j["final_train_cross_entropy"] = r.final_train_cross_entropy;
  j["reached_stop"] = r.reached_stop;
  j["wall_time_s"] = r.wall_time_s;
  j["loss_curve"] = r.loss_curve;
  return j;
}

/// Fresh network with U, V drawn i.i.d. per scheme and U0/V0 frozen copies.
/// uniform_fan_in draws U_ij ~ U(-1/sqrt(d), 1/sqrt(d)) and
/// V_ij ~ U(-1/sqrt(h), 1/sqrt(h)).
inline TwoLayerNet init_network(std::size_t d, std::size_t h, std::size_t c,
                                InitScheme scheme, std::uint64_t seed,
                                double sigma = 0.05) {
  if (d < 1 || h < 1 || c < 1)
    throw std::invalid_argument("init_network: dimensions must be >= 1");
  TwoLayerNet net;
  net.seed = seed;
  net.U = DenseMatrix(h, d);
  net.V = DenseMatrix(c, h);
  rng::Engine eng_u(rng::derive_seed(seed, rng::Stream::init_first_layer));
  rng::Engine eng_v(rng::derive_seed(seed, rng::Stream::init_second_layer));
  if (scheme == InitScheme::uniform_fan_in) {
    const double bu = 1.0 / std::sqrt(static_cast<double>(d));
    const double bv = 1.0 / std::sqrt(static_cast<double>(h));
    for (double& w : net.U.data()) w = eng_u.uniform(-bu, bu);
    for (double& w : net.V.data()) w = eng_v.uniform(-bv, bv);
  } else {
    if (sigma < 0.0) throw std::invalid_argument("init_network: sigma < 0");
    for (double& w : net.U.data()) w = sigma * eng_u.gaussian();
    for (double& w : net.V.data()) w = sigma * eng_v.gaussian();
  }
  net.U0 = net.U;
  net.V0 = net.V;
  return net;
}

/// Minibatch SGD with classical (heavy-ball) momentum on mean cross-entropy.
/// Stops when the epoch-mean training cross-entropy reaches cfg.stop_loss or
/// the epoch cap is hit. Updates U and V only; U0/V0 stay frozen.
inline TrainReport train(TwoLayerNet& net, const LabeledDataset& data,
                         const TrainConfig& cfg) {
  cfg.validate();
  net.validate();
  data.validate();
  if (data.dim() != net.input_dim())
    throw std::invalid_argument("train: dataset dim != net input dim");
  if (data.num_classes != static_cast<int>(net.num_classes()))
    throw std::invalid_argument("train: dataset classes != net outputs");

  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t m = data.size();
  const std::size_t d = data.dim();
  const std::size_t h = net.hidden_units();
  const std::size_t c = net.num_classes();
  const std::size_t bs = std::min(cfg.batch_size, m);

  auto U = as_eigen(net.U);
  auto V = as_eigen(net.V);
  const auto X = as_eigen(data.X);
  EigenRowMajor vel_u = EigenRowMajor::Zero(h, d);
  EigenRowMajor vel_v = EigenRowMajor::Zero(c, h);
  EigenRowMajor xb(bs, d), z(bs, h), p(bs, c), dv(c, h), du(h, d), dh(bs, h);

  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  rng::Engine shuffle_eng(rng::derive_seed(cfg.seed, rng::Stream::shuffle));

  TrainReport report;
  report.loss_curve.reserve(cfg.max_epochs);
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    if (cfg.shuffle) shuffle_eng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < m; start += bs) {
      const std::size_t b = std::min(bs, m - start);
      for (std::size_t r = 0; r < b; ++r)
        xb.row(static_cast<Eigen::Index>(r)) =
            X.row(static_cast<Eigen::Index>(order[start + r]));
      auto xbb = xb.topRows(static_cast<Eigen::Index>(b));
      auto zb = z.topRows(static_cast<Eigen::Index>(b));
      auto pb = p.topRows(static_cast<Eigen::Index>(b));
      auto dhb = dh.topRows(static_cast<Eigen::Index>(b));

      zb.noalias() = xbb * U.transpose();
      EigenRowMajor hidden = zb.cwiseMax(0.0);
      pb.noalias() = hidden * V.transpose();

      // Softmax + mean cross-entropy; pb becomes dL/dscores * b.
      double batch_loss = 0.0;
      for (std::size_t r = 0; r < b; ++r) {
        auto row = pb.row(static_cast<Eigen::Index>(r));
        const double top = row.maxCoeff();
        row = (row.array() - top).exp();
        const double sum = row.sum();
        row /= sum;
        const int y = data.y[order[start + r]];
        batch_loss -= std::log(row(y));
        row(y) -= 1.0;
      }
      batch_loss /= static_cast<double>(b);
      if (!std::isfinite(batch_loss))
        throw std::runtime_error(
            "train: non-finite training loss (learning rate too high?)");
      epoch_loss += batch_loss * static_cast<double>(b);
      pb /= static_cast<double>(b);

      dv.noalias() = pb.transpose() * hidden;
      dhb.noalias() = pb * V;
      // ReLU subgradient at 0 taken as 0: propagate only where z > 0.
      dhb = (zb.array() > 0.0).select(dhb, 0.0);
      du.noalias() = dhb.transpose() * xbb;

      vel_v = cfg.momentum * vel_v - cfg.lr * dv;
      V += vel_v;
      vel_u = cfg.momentum * vel_u - cfg.lr * du;
      U += vel_u;
    }
    epoch_loss /= static_cast<double>(m);
    report.loss_curve.push_back(epoch_loss);
    report.epochs_run = epoch + 1;
    report.final_train_cross_entropy = epoch_loss;
    if (epoch_loss <= cfg.stop_loss) {
      report.reached_stop = true;
      break;
    }
  }
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

struct SweepEntry {
  std::size_t width = 0;
  TwoLayerNet net;
  TrainReport report;
  std::string error;  // empty on success

  bool ok() const { return error.empty(); }
};

inline std::string sweep_checkpoint_name(std::size_t width) {
  return "ckpt_h" + std::to_string(width) + ".capm";
}

/// Trains one network per width; each run derives its seed as seed ^ width so
/// runs are independent yet reproducible. Failures are flagged per width
/// without aborting the sweep. Checkpoints and reports are persisted when
/// out_dir is nonempty; widths run in parallel when threads > 1.
inline std::vector<SweepEntry> width_sweep(const std::vector<std::size_t>& widths,
                                           const LabeledDataset& data,
                                           const TrainConfig& cfg_template,
                                           const std::string& out_dir = {},
                                           std::size_t threads = 1) {
  if (widths.empty()) throw std::invalid_argument("width_sweep: no widths");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  std::vector<SweepEntry> entries(widths.size());
  auto run_one = [&](std::size_t idx) {
    SweepEntry& entry = entries[idx];
    entry.width = widths[idx];
    try {
      TrainConfig cfg = cfg_template;
      cfg.seed = cfg_template.seed ^ static_cast<std::uint64_t>(widths[idx]);
      entry.net = init_network(data.dim(), widths[idx],
                               static_cast<std::size_t>(data.num_classes),
                               cfg.init, cfg.seed, cfg.init_sigma);
      entry.report = train(entry.net, data, cfg);
      if (!out_dir.empty()) {
        nlohmann::ordered_json extra;
        extra["init_scheme"] = to_string(cfg.init);
        if (cfg.init == InitScheme::gaussian) extra["init_sigma"] = cfg.init_sigma;
        extra["dataset"] = data.name;
        extra["lr"] = cfg.lr;
        extra["momentum"] = cfg.momentum;
        extra["batch_size"] = cfg.batch_size;
        extra["stop_loss"] = cfg.stop_loss;
        extra["max_epochs"] = cfg.max_epochs;
        const auto base =
            std::filesystem::path(out_dir) / sweep_checkpoint_name(widths[idx]);
        save_checkpoint(entry.net, base.string(), extra);
        atomic_write_file((std::filesystem::path(out_dir) /
                           ("report_h" + std::to_string(widths[idx]) + ".json"))
                              .string(),
                          report_to_json(entry.report).dump(2) + "\n");
      }
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
  };

  if (threads <= 1) {
    for (std::size_t i = 0; i < widths.size(); ++i) run_one(i);
  } else {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    const std::size_t workers = std::min(threads, widths.size());
    std::mutex mu;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t idx;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= widths.size()) return;
            idx = next++;
          }
          run_one(idx);
        }
      });
    for (auto& t : pool) t.join();
  }
  return entries;
}

}  // namespace capmeter
