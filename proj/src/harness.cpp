#include "oplm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace oplm {

Summary summarize(const std::vector<double>& values) {
  if (values.empty()) throw ContractError("summarize: no values");
  Summary s;
  s.n = values.size();
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(s.n);
  if (s.n < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  const double sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  s.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(s.n));
  return s;
}

// ------------------------------------------------------------ metrics log

void MetricsLog::add(MetricRow row) {
  for (auto it = rows_.rbegin(); it != rows_.rend(); ++it) {
    if (it->split == row.split) {
      if (row.iteration < it->iteration) {
        throw ContractError("metrics: iteration " + std::to_string(row.iteration) + " after " +
                            std::to_string(it->iteration) + " in split " + row.split);
      }
      break;
    }
  }
  rows_.push_back(std::move(row));
}

std::vector<MetricRow> MetricsLog::select(const std::string& split, const std::string& metric) const {
  std::vector<MetricRow> out;
  for (const auto& r : rows_) {
    if (r.split == split && r.metric == metric) out.push_back(r);
  }
  return out;
}

std::string MetricsLog::to_csv() const {
  std::ostringstream os;
  os << kHeader << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : rows_) {
    os << r.iteration << ',' << r.split << ',' << r.metric << ',' << r.mean << ',' << r.ci95 << ','
       << r.seconds << '\n';
  }
  return os.str();
}

MetricsLog MetricsLog::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw IoError("metrics CSV: unexpected header");
  MetricsLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (cols.size() != 6) throw IoError("metrics CSV: expected 6 columns in '" + line + "'");
    try {
      log.add({std::stoull(cols[0]), cols[1], cols[2], std::stod(cols[3]), std::stod(cols[4]), std::stod(cols[5])});
    } catch (const std::logic_error&) {
      throw IoError("metrics CSV: malformed row '" + line + "'");
    }
  }
  return log;
}

void MetricsLog::write_csv(const std::string& path) const {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << to_csv();
  if (!out) throw IoError("short write to " + path);
}

// ----------------------------------------------------------------- tasks

Rng stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x4f504c4du};
  return Rng(seq);
}

TaskSampler::TaskSampler(const RunConfig& config) : config_(config) {
  if (config_.task == TaskSource::Images) {
    const ImageDataset all = load_image_dataset(config_.image_root);
    const auto classes = all.class_count();
    const auto train = static_cast<std::size_t>(std::floor(config_.train_fraction * static_cast<double>(classes)));
    const auto val = static_cast<std::size_t>(std::floor(config_.val_fraction * static_cast<double>(classes)));
    if (train < config_.n_way || val < config_.n_way || classes - train - val < config_.n_way) {
      throw ConfigError("image dataset has " + std::to_string(classes) + " classes, too few for " +
                        std::to_string(config_.n_way) + "-way episodes in every split");
    }
    images_ = std::make_shared<DatasetSplits>(split_by_class(all, train, val));
  }
}

Task TaskSampler::sample(Split split, Rng& rng) const {
  switch (config_.task) {
    case TaskSource::Sine: return sample_sine_task(rng, config_.k_shot, config_.q_query);
    case TaskSource::Synthetic:
      return sample_synthetic_episode(rng, config_.n_way, config_.k_shot, config_.q_query, config_.synthetic_dim,
                                      config_.synthetic_spread);
    case TaskSource::Images: {
      const ImageDataset& ds = split == Split::Train ? images_->train : split == Split::Val ? images_->val : images_->test;
      return sample_image_episode(ds, rng, config_.n_way, config_.k_shot, config_.q_query);
    }
  }
  throw ContractError("TaskSampler: bad task source");
}

std::vector<Task> TaskSampler::sample_many(Split split, std::size_t n, Rng& rng) const {
  std::vector<Task> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample(split, rng));
  return out;
}

ProblemDims TaskSampler::dims() const {
  return problem_dims(config_, images_ ? images_->train.pixel_count() : 0);
}

// -------------------------------------------------------------- evaluation

namespace {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
/// written to per-index slots so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

double accuracy(const Tensor& outputs, const Tensor& onehot) {
  const auto pred = argmax_rows(outputs);
  const auto truth = argmax_rows(onehot);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace

EvalResult evaluate(const Learner& learner, const std::vector<Task>& tasks, std::size_t threads) {
  if (tasks.empty()) throw ContractError("evaluate: empty task list");
  EvalResult r;
  r.task_loss.resize(tasks.size());
  std::vector<double> acc(tasks.size(), 0.0);
  const bool classification = tasks.front().meta.kind == TaskKind::Classification;
  parallel_for(tasks.size(), threads, [&](std::size_t i) {
    Tape tape;
    const EpisodeResult e = learner.run(tape, tasks[i], false);
    r.task_loss[i] = e.loss.value().item();
    if (classification) acc[i] = accuracy(e.outputs.value(), tasks[i].query.targets);
  });
  r.loss = summarize(r.task_loss);
  if (classification) {
    r.task_accuracy = std::move(acc);
    r.accuracy = summarize(r.task_accuracy);
  }
  return r;
}

// ------------------------------------------------------------ checkpoints

Checkpoint learner_checkpoint(const Learner& learner, const RunConfig& config) {
  Checkpoint c;
  c.config_hash = config_hash(config);
  const Parameters& p = learner.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) c.put("param/" + p.name(i), p[i]);
  c.put_text("meta/config", to_text(config));
  return c;
}

void restore_parameters(Learner& learner, const Checkpoint& ckpt, const std::string& prefix) {
  Parameters& p = learner.parameters();
  // Check everything first so a failure leaves the learner untouched.
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Tensor& t = ckpt.get(prefix + p.name(i));
    if (t.shape() != p[i].shape()) {
      throw IoError("checkpoint tensor " + prefix + p.name(i) + " has shape " + shape_string(t.shape()) +
                    ", model expects " + shape_string(p[i].shape()));
    }
  }
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = ckpt.get(prefix + p.name(i));
}

LoadedModel load_model(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  LoadedModel m;
  m.config = parse_run_config(ckpt.get_text("meta/config"));
  if (config_hash(m.config) != ckpt.config_hash) throw IoError("checkpoint config text does not match its hash");
  const TaskSampler sampler(m.config);
  Rng init = stream_rng(m.config.seed, 0);
  m.learner = make_learner(m.config, sampler.dims(), init);
  restore_parameters(*m.learner, ckpt);
  return m;
}

// ---------------------------------------------------------------- training

namespace {

constexpr std::uint64_t kInitStream = 0, kTrainStream = 1, kValStream = 2, kTestStream = 3;

std::string rng_text(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_text(const std::string& text) {
  Rng rng;
  std::istringstream is(text);
  is >> rng;
  if (!is) throw IoError("checkpoint rng state is unreadable");
  return rng;
}

struct Progress {
  std::vector<Tensor> best;
  double best_val = 0.0;
  std::size_t best_iteration = 0;
  bool have_best = false;
};

Checkpoint training_checkpoint(const Learner& learner, const RunConfig& config, const AdamState& adam,
                               std::size_t iteration, const Rng& rng, const Progress& progress,
                               const MetricsLog& log) {
  Checkpoint c = learner_checkpoint(learner, config);
  const Parameters& p = learner.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) {
    c.put("adam/m/" + p.name(i), adam.first_moment[i]);
    c.put("adam/v/" + p.name(i), adam.second_moment[i]);
    c.put("best/" + p.name(i), progress.best[i]);
  }
  c.put("meta/adam_step", Tensor::scalar(static_cast<double>(adam.step)));
  c.put("meta/iteration", Tensor::scalar(static_cast<double>(iteration)));
  c.put("meta/best_val", Tensor::scalar(progress.best_val));
  c.put("meta/best_iteration", Tensor::scalar(static_cast<double>(progress.best_iteration)));
  c.put_text("meta/rng", rng_text(rng));
  c.put_text("meta/log", log.to_csv());
  return c;
}

}  // namespace

TrainResult meta_train(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  auto seconds = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  const TaskSampler sampler(config);
  const ProblemDims dims = sampler.dims();
  const bool classification = dims.kind == TaskKind::Classification;

  Rng init = stream_rng(config.seed, kInitStream);
  TrainResult result;
  result.learner = make_learner(config, dims, init);
  Learner& learner = *result.learner;
  Parameters& params = learner.parameters();
  const std::vector<bool> frozen = learner.frozen();

  Rng train_rng = stream_rng(config.seed, kTrainStream);
  Rng val_rng = stream_rng(config.seed, kValStream);
  const std::vector<Task> val_tasks = sampler.sample_many(Split::Val, config.val_tasks, val_rng);

  AdamState adam = AdamState::for_parameters(params.values());
  AdamOptions adam_options;
  adam_options.lr = config.outer_lr;
  Progress progress;
  progress.best = params.values();
  std::size_t first_iteration = 1;

  if (options.resume) {
    const Checkpoint ckpt = load_checkpoint(*options.resume, config_hash(config));
    restore_parameters(learner, ckpt);
    for (std::size_t i = 0; i < params.size(); ++i) {
      adam.first_moment[i] = ckpt.get("adam/m/" + params.name(i));
      adam.second_moment[i] = ckpt.get("adam/v/" + params.name(i));
      progress.best[i] = ckpt.get("best/" + params.name(i));
    }
    adam.step = static_cast<std::uint64_t>(ckpt.get("meta/adam_step").item());
    first_iteration = static_cast<std::size_t>(ckpt.get("meta/iteration").item()) + 1;
    progress.best_val = ckpt.get("meta/best_val").item();
    progress.best_iteration = static_cast<std::size_t>(ckpt.get("meta/best_iteration").item());
    progress.have_best = progress.best_iteration > 0;
    train_rng = rng_from_text(ckpt.get_text("meta/rng"));
    result.log = MetricsLog::from_csv(ckpt.get_text("meta/log"));
  }

  const std::size_t J = config.meta_batch;
  std::vector<double> train_losses;
  for (std::size_t it = first_iteration; it <= config.meta_iterations; ++it) {
    const std::vector<Task> batch = sampler.sample_many(Split::Train, J, train_rng);
    std::vector<std::vector<Tensor>> task_grads(J);
    std::vector<double> task_losses(J);
    try {
      parallel_for(J, config.threads, [&](std::size_t j) {
        Tape tape;
        const EpisodeResult e = learner.run(tape, batch[j], true);
        task_losses[j] = e.loss.value().item();
        task_grads[j] = tape.backward(e.loss);
      });
    } catch (const NumericError& e) {
      throw NumericError("meta-iteration " + std::to_string(it) + ": " + e.what());
    }
    // Gradient buffer averaged over the batch, summed in task order.
    std::vector<Tensor> grads;
    for (std::size_t i = 0, k = 0; i < params.size(); ++i) {
      if (!frozen.empty() && frozen[i]) {
        grads.push_back(Tensor::zeros_like(params[i]));
        continue;
      }
      Tensor g = task_grads[0][k];
      for (std::size_t j = 1; j < J; ++j) g += task_grads[j][k];
      g *= 1.0 / static_cast<double>(J);
      if (!g.all_finite()) {
        throw NumericError("meta-iteration " + std::to_string(it) + ": non-finite gradient for " + params.name(i));
      }
      grads.push_back(std::move(g));
      ++k;
    }
    adam_step(params.values(), grads, adam, adam_options);
    for (double l : task_losses) train_losses.push_back(l);

    if (it % config.val_every == 0) {
      const EvalResult val = evaluate(learner, val_tasks, config.threads);
      const double s = seconds();
      const Summary train = summarize(train_losses);
      train_losses.clear();
      result.log.add({it, "train", "loss", train.mean, train.ci95, s});
      result.log.add({it, "val", "loss", val.loss.mean, val.loss.ci95, s});
      if (classification) result.log.add({it, "val", "accuracy", val.accuracy.mean, val.accuracy.ci95, s});
      const double score = classification ? val.accuracy.mean : val.loss.mean;
      const bool better = !progress.have_best || (classification ? score > progress.best_val : score < progress.best_val);
      if (better) {
        progress.best = params.values();
        progress.best_val = score;
        progress.best_iteration = it;
        progress.have_best = true;
        if (options.write_files) save_checkpoint(config.out_dir + "/best.ckpt", learner_checkpoint(learner, config));
      }
      if (options.verbose) {
        std::cerr << "iter " << it << "  train " << train.mean << "  val loss " << val.loss.mean;
        if (classification) std::cerr << "  val acc " << val.accuracy.mean;
        std::cerr << (better ? "  *" : "") << "  (" << std::fixed << std::setprecision(1) << s << "s)\n"
                  << std::defaultfloat << std::setprecision(6);
      }
      if (options.on_validation) options.on_validation(it, learner, result.log);
      const bool stopping = options.stop_after && it >= *options.stop_after;
      if (options.write_files || stopping) {
        const Checkpoint latest = training_checkpoint(learner, config, adam, it, train_rng, progress, result.log);
        save_checkpoint(config.out_dir + "/latest.ckpt", latest);
      }
      if (stopping) {
        result.best_iteration = progress.best_iteration;
        result.best_val = progress.best_val;
        return result;
      }
    }
  }

  params.values() = progress.best;
  Rng test_rng = stream_rng(config.seed, kTestStream);
  const std::vector<Task> test_tasks = sampler.sample_many(Split::Test, config.test_tasks, test_rng);
  result.test = evaluate(learner, test_tasks, config.threads);
  const double s = seconds();
  const std::size_t at = progress.best_iteration;
  result.log.add({at, "test", "loss", result.test.loss.mean, result.test.loss.ci95, s});
  if (classification) result.log.add({at, "test", "accuracy", result.test.accuracy.mean, result.test.accuracy.ci95, s});
  for (double l : result.test.task_loss) result.log.add({at, "test_task", "loss", l, 0.0, s});
  for (double a : result.test.task_accuracy) result.log.add({at, "test_task", "accuracy", a, 0.0, s});
  result.best_iteration = progress.best_iteration;
  result.best_val = progress.best_val;
  result.finished = true;
  if (options.write_files) {
    result.log.write_csv(config.out_dir + "/metrics.csv");
    save_checkpoint(config.out_dir + "/best.ckpt", learner_checkpoint(learner, config));
  }
  return result;
}

}  // namespace oplm
