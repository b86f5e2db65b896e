#include "mtgp/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mtgp/rng.hpp"

namespace mtgp::data {

namespace {

constexpr double kTwoPi = 6.28318530717958647692528676655901;
constexpr double kPi = 3.14159265358979323846;

// PNM header token reader: skips whitespace and '#' comments.
struct PgmCursor {
  const std::string& bytes;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  int read_int(const char* what) {
    skip_space_and_comments();
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      throw std::runtime_error(std::string("parse_pgm: expected ") + what);
    }
    long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000'000L) throw std::runtime_error("parse_pgm: absurd header value");
      ++pos;
    }
    return static_cast<int>(v);
  }
};

}  // namespace

Image parse_pgm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    const std::string magic = bytes.substr(0, std::min<std::size_t>(2, bytes.size()));
    throw std::runtime_error("parse_pgm: expected binary PGM magic 'P5', got '" +
                             magic + "'");
  }
  PgmCursor cur{bytes, 2};
  const int width = cur.read_int("width");
  const int height = cur.read_int("height");
  const int maxval = cur.read_int("maxval");
  if (width <= 0 || height <= 0) {
    throw std::runtime_error("parse_pgm: non-positive dimensions");
  }
  if (maxval <= 0 || maxval > 255) {
    throw std::runtime_error("parse_pgm: maxval " + std::to_string(maxval) +
                             " out of supported range [1, 255]");
  }
  // exactly one whitespace byte separates the header from the payload
  if (cur.pos >= bytes.size() ||
      !std::isspace(static_cast<unsigned char>(bytes[cur.pos]))) {
    throw std::runtime_error("parse_pgm: missing separator before pixel data");
  }
  ++cur.pos;
  const std::size_t need = static_cast<std::size_t>(width) * height;
  if (bytes.size() - cur.pos < need) {
    throw std::runtime_error("parse_pgm: truncated payload (need " +
                             std::to_string(need) + " bytes, have " +
                             std::to_string(bytes.size() - cur.pos) + ")");
  }
  Image img(height, width);
  const double scale = 1.0 / maxval;
  for (std::size_t i = 0; i < need; ++i) {
    img.pix[i] = static_cast<unsigned char>(bytes[cur.pos + i]) * scale;
  }
  return img;
}

std::string write_pgm(const Image& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.pix.size());
  for (double v : img.pix) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

Image load_pgm_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_pgm(buf.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(field);
  return fields;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& root) {
  const std::filesystem::path manifest = root / "manifest.csv";
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot open manifest: " + manifest.string());

  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(manifest.string() + ": empty file");
  }
  {
    const auto header = split_csv_row(line);
    if (header != std::vector<std::string>{"path", "label", "split"}) {
      throw std::runtime_error(manifest.string() +
                               ": header must be exactly 'path,label,split'");
    }
  }

  Dataset ds;
  ds.name = root.filename().string();
  std::map<std::string, int> label_ids;
  std::vector<std::string> label_order;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_row(line);
    const std::string where = manifest.string() + " row " + std::to_string(row);
    if (fields.size() != 3) {
      throw std::runtime_error(where + ": expected 3 fields, got " +
                               std::to_string(fields.size()));
    }
    const std::string& rel = fields[0];
    const std::string& label = fields[1];
    const std::string& split = fields[2];
    if (rel.empty() || label.empty()) {
      throw std::runtime_error(where + ": empty path or label");
    }
    Split sp;
    if (split == "train") {
      sp = Split::Train;
    } else if (split == "test") {
      sp = Split::Test;
    } else {
      throw std::runtime_error(where + ": unknown split '" + split +
                               "' (expected 'train' or 'test')");
    }
    auto [it, inserted] = label_ids.emplace(label, static_cast<int>(label_order.size()));
    if (inserted) label_order.push_back(label);

    Image img;
    try {
      img = load_pgm_file(root / rel);
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
    if (img.height < 8 || img.width < 8) {
      throw std::runtime_error(where + ": image smaller than 8x8");
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(it->second);
    ds.splits.push_back(sp);
  }
  ds.num_classes = static_cast<int>(label_order.size());
  if (ds.images.empty()) {
    throw std::runtime_error(manifest.string() + ": no data rows");
  }

  std::vector<int> in_train(ds.num_classes, 0), in_test(ds.num_classes, 0);
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    (ds.splits[i] == Split::Train ? in_train : in_test)[ds.labels[i]]++;
  }
  for (int c = 0; c < ds.num_classes; ++c) {
    if (in_train[c] == 0 || in_test[c] == 0) {
      throw std::runtime_error(manifest.string() + ": class '" + label_order[c] +
                               "' is missing from the " +
                               (in_train[c] == 0 ? "train" : "test") + " split");
    }
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  std::ofstream manifest(root / "manifest.csv", std::ios::binary);
  if (!manifest) {
    throw std::runtime_error("cannot write manifest under " + root.string());
  }
  manifest << "path,label,split\n";
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const std::string name = "img" + std::to_string(i) + ".pgm";
    std::ofstream img(root / name, std::ios::binary);
    if (!img) throw std::runtime_error("cannot write image under " + root.string());
    const std::string bytes = write_pgm(ds.images[i]);
    img.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    manifest << name << ",c" << ds.labels[i] << ","
             << (ds.splits[i] == Split::Train ? "train" : "test") << "\n";
  }
}

mt::TaskSpec to_task(const Dataset& ds) {
  mt::TaskSpec task;
  task.name = ds.name.empty() ? "task" : ds.name;
  task.num_classes = ds.num_classes;
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    if (ds.splits[i] == Split::Train) {
      task.train_images.push_back(ds.images[i]);
      task.train_labels.push_back(ds.labels[i]);
    } else {
      task.test_images.push_back(ds.images[i]);
      task.test_labels.push_back(ds.labels[i]);
    }
  }
  return task;
}

void SynthSpec::validate() const {
  if (height < 8 || width < 8) {
    throw std::invalid_argument("SynthSpec: images must be at least 8x8");
  }
  if (train_per_class < 3) {
    throw std::invalid_argument("SynthSpec: need >= 3 training images per class");
  }
  if (test_per_class < 1) {
    throw std::invalid_argument("SynthSpec: need >= 1 test image per class");
  }
  if (noise_std < 0.0) throw std::invalid_argument("SynthSpec: negative noise_std");
}

namespace {

Image grating(int height, int width, double theta, double period, double phase,
              double noise_std, Rng& rng) {
  Image img(height, width);
  const double freq = kTwoPi / period;
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double v = 0.5 + 0.3 * std::sin(freq * (c * ct + r * st) + phase);
      if (noise_std > 0.0) v += noise_std * rng.normal();
      img.at(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace

Dataset generate_synth(const SynthSpec& spec, SynthTask task) {
  spec.validate();
  Dataset ds;
  ds.name = (task == SynthTask::Orientation) ? "synth_orientation" : "synth_frequency";

  // Orientation task: 4 orientations at one fixed period. Frequency task:
  // 2 periods at random orientation.
  const std::vector<double> orient_classes = {0.0, kPi / 4.0, kPi / 2.0,
                                              3.0 * kPi / 4.0};
  const std::vector<double> freq_periods = {16.0, 5.0};
  const double orient_period = 8.0;
  const int num_classes = (task == SynthTask::Orientation)
                              ? static_cast<int>(orient_classes.size())
                              : static_cast<int>(freq_periods.size());
  ds.num_classes = num_classes;

  Rng rng(derive_seed(spec.seed, task == SynthTask::Orientation ? 101 : 102));
  for (const Split split : {Split::Train, Split::Test}) {
    const int per_class =
        (split == Split::Train) ? spec.train_per_class : spec.test_per_class;
    for (int cls = 0; cls < num_classes; ++cls) {
      for (int i = 0; i < per_class; ++i) {
        const double phase = rng.uniform(0.0, kTwoPi);
        double theta, period;
        if (task == SynthTask::Orientation) {
          theta = orient_classes[cls];
          period = orient_period;
        } else {
          theta = rng.uniform(0.0, kPi);
          period = freq_periods[cls];
        }
        ds.images.push_back(
            grating(spec.height, spec.width, theta, period, phase, spec.noise_std, rng));
        ds.labels.push_back(cls);
        ds.splits.push_back(split);
      }
    }
  }
  return ds;
}

std::pair<mt::TaskSpec, mt::TaskSpec> generate_synth_pair(const SynthSpec& spec_a,
                                                           const SynthSpec& spec_b) {
  mt::TaskSpec a = to_task(generate_synth(spec_a, SynthTask::Orientation));
  mt::TaskSpec b = to_task(generate_synth(spec_b, SynthTask::Frequency));
  return {std::move(a), std::move(b)};
}

}  // namespace mtgp::data
