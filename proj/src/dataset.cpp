#include "texton/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "texton/rng.hpp"

namespace texton {

namespace fs = std::filesystem;

Dataset load_dataset(const fs::path& root) {
  if (!fs::exists(root) || !fs::is_directory(root))
    throw NotFoundError("dataset: root " + root.string() +
                        " does not exist or is not a directory");
  Dataset data;
  data.root = root;

  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name == "splits") continue;
    class_dirs.push_back(name);
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty())
    throw NotFoundError("dataset: no class directories under " + root.string());
  data.class_names = class_dirs;

  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(root / class_dirs[label])) {
      if (!entry.is_regular_file()) continue;
      const std::string ext = entry.path().extension().string();
      if (ext == ".pgm" || ext == ".ppm")
        files.push_back(entry.path().filename().string());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      const std::string rel = class_dirs[label] + "/" + file;
      try {
        Image img = read_pnm(root / class_dirs[label] / file);
        data.images.push_back(expand_to_rgb(img));
        data.samples.push_back({rel, static_cast<int>(label)});
      } catch (const IoError& e) {
        data.warnings.push_back(e.what());
      }
    }
  }
  return data;
}

void make_random_splits(Dataset& data, int n_splits, double train_fraction,
                        std::uint64_t seed) {
  const int n = data.size();
  if (n < 2)
    throw std::invalid_argument("splits: need at least 2 samples, have " +
                                std::to_string(n));
  if (n_splits < 1) throw std::invalid_argument("splits: need at least 1 split");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("splits: train fraction must lie in (0,1)");

  int n_train = static_cast<int>(std::lround(n * train_fraction));
  n_train = std::max(1, std::min(n - 1, n_train));

  data.splits.clear();
  for (int k = 0; k < n_splits; ++k) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(k)));
    rng.shuffle(perm);
    Split s;
    s.train.assign(perm.begin(), perm.begin() + n_train);
    s.test.assign(perm.begin() + n_train, perm.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    data.splits.push_back(std::move(s));
  }
}

bool load_split_files(Dataset& data) {
  const fs::path dir = data.root / "splits";
  if (!fs::exists(dir)) return false;

  std::unordered_map<std::string, int> index;
  for (int i = 0; i < data.size(); ++i)
    index[data.samples[static_cast<std::size_t>(i)].relpath] = i;

  auto read_list = [&](const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("splits: cannot open " + file.string());
    std::vector<int> out;
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
        line.pop_back();
      if (line.empty()) continue;
      auto it = index.find(line);
      if (it == index.end())
        throw IoError("splits: " + file.string() + " names unknown sample '" +
                      line + "'");
      out.push_back(it->second);
    }
    return out;
  };

  data.splits.clear();
  for (int k = 0;; ++k) {
    const fs::path train_file = dir / (std::to_string(k) + "_train.txt");
    const fs::path test_file = dir / (std::to_string(k) + "_test.txt");
    if (!fs::exists(train_file)) break;
    if (!fs::exists(test_file))
      throw IoError("splits: " + train_file.string() + " has no matching test list");
    Split s;
    s.train = read_list(train_file);
    s.test = read_list(test_file);
    data.splits.push_back(std::move(s));
  }
  return !data.splits.empty();
}

void compute_normalization(Dataset& data, const std::vector<int>& train_indices) {
  if (train_indices.empty())
    throw std::invalid_argument("normalization: empty training set");
  double sum[3] = {0, 0, 0}, sumsq[3] = {0, 0, 0};
  std::size_t count = 0;
  for (int idx : train_indices) {
    const Image& img = data.images.at(static_cast<std::size_t>(idx));
    const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
    for (int c = 0; c < 3; ++c) {
      const float* p = img.pixels.data() + static_cast<std::size_t>(c) * n;
      for (std::size_t i = 0; i < n; ++i) {
        sum[c] += p[i];
        sumsq[c] += static_cast<double>(p[i]) * p[i];
      }
    }
    count += n;
  }
  for (int c = 0; c < 3; ++c) {
    const double mean = sum[c] / static_cast<double>(count);
    double var = sumsq[c] / static_cast<double>(count) - mean * mean;
    if (var < 0) var = 0;
    data.norm_mean[static_cast<std::size_t>(c)] = static_cast<float>(mean);
    // Floor keeps constant channels from exploding the normalized values.
    data.norm_std[static_cast<std::size_t>(c)] =
        std::max(1e-3f, static_cast<float>(std::sqrt(var)));
  }
}

void write_manifest_csv(const Dataset& data, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("manifest: cannot create " + path.string());
  out << "path,label,class_name\n";
  for (const auto& s : data.samples)
    out << s.relpath << ',' << s.label << ','
        << data.class_names.at(static_cast<std::size_t>(s.label)) << '\n';
  if (!out) throw IoError("manifest: write failed for " + path.string());
}

}  // namespace texton
