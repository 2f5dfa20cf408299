#include "oplm/tasks.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

namespace oplm {

Examples Examples::permuted(const std::vector<std::size_t>& order) const {
  const std::size_t n = size();
  if (order.size() != n) throw ContractError("permuted: order length differs from example count");
  std::vector<bool> seen(n, false);
  for (auto i : order) {
    if (i >= n || seen[i]) throw ContractError("permuted: order is not a permutation");
    seen[i] = true;
  }
  Examples out{Tensor(inputs.shape()), Tensor(targets.shape())};
  const std::size_t di = inputs.cols(), dt = targets.cols();
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(inputs.data().begin() + order[r] * di, di, out.inputs.data().begin() + r * di);
    std::copy_n(targets.data().begin() + order[r] * dt, dt, out.targets.data().begin() + r * dt);
  }
  return out;
}

void validate_task(const Task& task) {
  if (task.support.size() == 0) throw ContractError("task has an empty support set");
  if (task.support.targets.rows() != task.support.size()) {
    throw ContractError("support inputs and targets differ in length");
  }
  if (task.query.size() > 0 && (task.query.input_dim() != task.support.input_dim() ||
                                task.query.output_dim() != task.support.output_dim())) {
    throw ContractError("support and query dimensions differ");
  }
}

// --------------------------------------------------------------------- sine

double SineTask::operator()(double x) const { return amplitude * std::sin(x - phase); }

Examples SineTask::sample(Rng& rng, std::size_t n) const {
  std::uniform_real_distribution<double> ux(kMinInput, kMaxInput);
  Examples e{Tensor({n, 1}), Tensor({n, 1})};
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ux(rng);
    e.inputs[i] = x;
    e.targets[i] = (*this)(x);
  }
  return e;
}

SineTask sample_sine_parameters(Rng& rng) {
  std::uniform_real_distribution<double> ua(SineTask::kMinAmplitude, SineTask::kMaxAmplitude);
  std::uniform_real_distribution<double> up(0.0, std::numbers::pi);
  SineTask s;
  s.amplitude = ua(rng);
  s.phase = up(rng);
  return s;
}

Task sample_sine_task(Rng& rng, std::size_t k_shot, std::size_t queries) {
  if (k_shot == 0 || queries == 0) throw ContractError("sine task needs k >= 1 and q >= 1");
  const SineTask s = sample_sine_parameters(rng);
  Task t;
  t.support = s.sample(rng, k_shot);
  t.query = s.sample(rng, queries);
  t.meta.kind = TaskKind::Regression;
  t.meta.k_shot = k_shot;
  t.meta.amplitude = s.amplitude;
  t.meta.phase = s.phase;
  return t;
}

// ---------------------------------------------------------------- synthetic

namespace {

std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace

Task sample_synthetic_episode(Rng& rng, std::size_t n_way, std::size_t k_shot,
                              std::size_t queries_per_class, std::size_t dim, double spread) {
  if (n_way < 2) throw ContractError("synthetic episode needs at least 2 classes");
  if (k_shot == 0 || dim == 0) throw ContractError("synthetic episode needs k >= 1 and dim >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Tensor> centers;
  for (std::size_t c = 0; c < n_way; ++c) {
    Tensor v({dim});
    double norm = 0.0;
    while (norm == 0.0) {
      for (auto& x : v.data()) x = normal(rng);
      norm = l2_norm(v);
    }
    v *= 1.0 / norm;
    centers.push_back(std::move(v));
  }
  const std::vector<std::size_t> label_of = random_permutation(rng, n_way);

  auto draw = [&](std::size_t per_class) {
    Examples e{Tensor({n_way * per_class, dim}), Tensor({n_way * per_class, n_way})};
    std::size_t row = 0;
    for (std::size_t c = 0; c < n_way; ++c) {
      for (std::size_t i = 0; i < per_class; ++i, ++row) {
        for (std::size_t d = 0; d < dim; ++d) {
          e.inputs(row, d) = centers[c][d] + spread * normal(rng);
        }
        e.targets(row, label_of[c]) = 1.0;
      }
    }
    return e;
  };

  Task t;
  t.support = draw(k_shot);
  t.query = draw(queries_per_class);
  t.meta.kind = TaskKind::Classification;
  t.meta.n_way = n_way;
  t.meta.k_shot = k_shot;
  return t;
}

// ------------------------------------------------------------------- images

namespace {

std::string lower_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

bool is_image_file(const std::filesystem::path& p) {
  const std::string ext = lower_extension(p);
  return ext == ".pgm" || ext == ".png";
}

// Reads the next whitespace-separated header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string ignored;
      std::getline(in, ignored);
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

std::size_t parse_count(const std::string& tok, const std::filesystem::path& file) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(c); })) {
    throw IoError("malformed PGM header in " + file.string());
  }
  return std::stoul(tok);
}

Tensor load_pgm(const std::filesystem::path& file, std::size_t& width, std::size_t& height) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  const std::string magic = pgm_token(in);
  if (magic != "P2" && magic != "P5") throw IoError("not a PGM file: " + file.string());
  width = parse_count(pgm_token(in), file);
  height = parse_count(pgm_token(in), file);
  const std::size_t maxval = parse_count(pgm_token(in), file);
  if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) {
    throw IoError("invalid PGM dimensions in " + file.string());
  }
  const std::size_t n = width * height;
  Tensor out({n});
  const double scale = 1.0 / static_cast<double>(maxval);
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t v = parse_count(pgm_token(in), file);
      if (v > maxval) throw IoError("PGM sample exceeds maxval in " + file.string());
      out[i] = static_cast<double>(v) * scale;
    }
  } else {
    const std::size_t bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> raw(n * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
      throw IoError("truncated PGM data in " + file.string());
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t v = bytes == 1 ? raw[i] : (std::size_t{raw[2 * i]} << 8) | raw[2 * i + 1];
      if (v > maxval) throw IoError("PGM sample exceeds maxval in " + file.string());
      out[i] = static_cast<double>(v) * scale;
    }
  }
  return out;
}

Tensor load_png(const std::filesystem::path& file, std::size_t& width, std::size_t& height) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, file.string().c_str())) {
    throw IoError("cannot decode PNG " + file.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode PNG " + file.string() + ": " + msg);
  }
  width = image.width;
  height = image.height;
  Tensor out({width * height});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = buffer[i] / 255.0;
  return out;
}

}  // namespace

Tensor load_grayscale_image(const std::filesystem::path& file, std::size_t& width,
                            std::size_t& height) {
  const std::string ext = lower_extension(file);
  if (ext == ".pgm") return load_pgm(file, width, height);
  if (ext == ".png") return load_png(file, width, height);
  throw IoError("unsupported image format: " + file.string());
}

ImageDataset load_image_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("dataset root is not a directory: " + root.string());
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw IoError("no class directories under " + root.string());

  ImageDataset ds;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Tensor> images;
    for (const auto& f : files) {
      std::size_t w = 0, h = 0;
      Tensor img = load_grayscale_image(f, w, h);
      if (ds.width == 0) {
        ds.width = w;
        ds.height = h;
      } else if (w != ds.width || h != ds.height) {
        throw IoError("inconsistent image size in " + f.string() + ": " + std::to_string(w) + "x" +
                      std::to_string(h) + " vs " + std::to_string(ds.width) + "x" +
                      std::to_string(ds.height));
      }
      images.push_back(std::move(img));
    }
    ds.class_names.push_back(dir.filename().string());
    ds.images.push_back(std::move(images));
  }
  return ds;
}

DatasetSplits split_by_class(const ImageDataset& ds, std::size_t train_classes,
                             std::size_t val_classes) {
  if (train_classes + val_classes > ds.class_count()) {
    throw ContractError("split_by_class: not enough classes");
  }
  auto take = [&](std::size_t begin, std::size_t end, const char* tag) {
    ImageDataset out;
    out.width = ds.width;
    out.height = ds.height;
    out.split = tag;
    for (std::size_t c = begin; c < end; ++c) {
      out.class_names.push_back(ds.class_names[c]);
      out.images.push_back(ds.images[c]);
    }
    return out;
  };
  const std::size_t a = train_classes, b = train_classes + val_classes;
  return DatasetSplits{take(0, a, "train"), take(a, b, "val"), take(b, ds.class_count(), "test")};
}

Task sample_image_episode(const ImageDataset& ds, Rng& rng, std::size_t n_way, std::size_t k_shot,
                          std::size_t queries_per_class) {
  if (n_way < 2 || k_shot == 0) throw ContractError("image episode needs N >= 2 and k >= 1");
  if (n_way > ds.class_count()) {
    throw ContractError("image episode asks for " + std::to_string(n_way) + " classes, dataset has " +
                        std::to_string(ds.class_count()));
  }
  const std::size_t per_class = k_shot + queries_per_class;
  std::vector<std::size_t> classes = random_permutation(rng, ds.class_count());
  classes.resize(n_way);
  for (auto c : classes) {
    if (ds.images[c].size() < per_class) {
      throw ContractError("class '" + ds.class_names[c] + "' has " +
                          std::to_string(ds.images[c].size()) + " images, episode needs " +
                          std::to_string(per_class));
    }
  }
  const std::vector<std::size_t> label_of = random_permutation(rng, n_way);
  const std::size_t pixels = ds.pixel_count();
  Task t;
  t.support = Examples{Tensor({n_way * k_shot, pixels}), Tensor({n_way * k_shot, n_way})};
  t.query = Examples{Tensor({n_way * queries_per_class, pixels}),
                     Tensor({n_way * queries_per_class, n_way})};
  std::size_t srow = 0, qrow = 0;
  for (std::size_t slot = 0; slot < n_way; ++slot) {
    const auto& imgs = ds.images[classes[slot]];
    std::vector<std::size_t> pick = random_permutation(rng, imgs.size());
    for (std::size_t i = 0; i < per_class; ++i) {
      const Tensor& img = imgs[pick[i]];
      Examples& dst = i < k_shot ? t.support : t.query;
      std::size_t& row = i < k_shot ? srow : qrow;
      std::copy(img.data().begin(), img.data().end(), dst.inputs.data().begin() + row * pixels);
      dst.targets(row, label_of[slot]) = 1.0;
      ++row;
    }
  }
  t.meta.kind = TaskKind::Classification;
  t.meta.n_way = n_way;
  t.meta.k_shot = k_shot;
  return t;
}

std::vector<std::size_t> argmax_rows(const Tensor& m) {
  const std::size_t r = m.rows(), c = m.cols();
  std::vector<std::size_t> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const auto* row = m.data().data() + i * c;
    out[i] = static_cast<std::size_t>(std::max_element(row, row + c) - row);
  }
  return out;
}

}  // namespace oplm
