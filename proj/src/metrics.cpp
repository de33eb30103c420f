#include "floeseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "floeseg/error.hpp"
#include "floeseg/parallel.hpp"

namespace floeseg {

namespace {

void require_same(const LabelMap& a, const LabelMap& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::DimensionMismatch, "label maps differ in size");
  }
}

using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Plane luma_plane(const Raster& r) {
  const Eigen::ArrayXd l = luma(r);
  return Eigen::Map<const Plane>(l.data(), r.height(), r.width());
}

double ssim_term(double ma, double mb, double va, double vb, double cov, const SsimParams& p) {
  return (2 * ma * mb + p.c1) * (2 * cov + p.c2) / ((ma * ma + mb * mb + p.c1) * (va + vb + p.c2));
}

// Population statistics over one unweighted window.
double block_ssim(const Plane& a, const Plane& b, const SsimParams& p) {
  const double ma = a.mean(), mb = b.mean();
  const double va = (a - ma).square().mean();
  const double vb = (b - mb).square().mean();
  const double cov = ((a - ma) * (b - mb)).mean();
  return ssim_term(ma, mb, va, vb, cov, p);
}

double blocks(const Plane& a, const Plane& b, const SsimParams& p) {
  constexpr int k = 8;
  const Eigen::Index rows = a.rows() / k, cols = a.cols() / k;
  if (rows == 0 || cols == 0) return block_ssim(a, b, p);
  double sum = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) sum += block_ssim(a.block(r * k, c * k, k, k), b.block(r * k, c * k, k, k), p);
  }
  return sum / static_cast<double>(rows * cols);
}

double gaussian(const Plane& a, const Plane& b, const SsimParams& p) {
  constexpr int k = 11;
  if (a.rows() < k || a.cols() < k) return block_ssim(a, b, p);
  Eigen::Array<double, k, k> w;
  for (int y = 0; y < k; ++y) {
    for (int x = 0; x < k; ++x) w(y, x) = std::exp(-((y - 5) * (y - 5) + (x - 5) * (x - 5)) / (2 * p.sigma * p.sigma));
  }
  w /= w.sum();
  double sum = 0.0;
  const Eigen::Index rows = a.rows() - k + 1, cols = a.cols() - k + 1;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto wa = a.block<k, k>(r, c);
      const auto wb = b.block<k, k>(r, c);
      const double ma = (w * wa).sum(), mb = (w * wb).sum();
      const double va = (w * (wa - ma).square()).sum();
      const double vb = (w * (wb - mb).square()).sum();
      const double cov = (w * ((wa - ma) * (wb - mb))).sum();  // grouped so swapping a and b is exact
      sum += ssim_term(ma, mb, va, vb, cov, p);
    }
  }
  return sum / static_cast<double>(rows * cols);
}

nlohmann::json stratum_json(const StratumReport& s) {
  nlohmann::json counts = nlohmann::json::array(), norm = nlohmann::json::array();
  for (int a = 0; a < kClassCount; ++a) {
    nlohmann::json crow = nlohmann::json::array(), nrow = nlohmann::json::array();
    for (int b = 0; b < kClassCount; ++b) {
      crow.push_back(s.confusion.counts(a, b));
      nrow.push_back(s.confusion.normalized(a, b));
    }
    counts.push_back(crow);
    norm.push_back(nrow);
  }
  nlohmann::json empty = nlohmann::json::array();
  for (int b = 0; b < kClassCount; ++b) {
    if (s.confusion.empty_column[b]) empty.push_back(kClassNames[b]);
  }
  return {{"tiles", s.tiles},
          {"pixels", s.confusion.total()},
          {"accuracy", s.confusion.total() ? nlohmann::json(s.confusion.accuracy()) : nlohmann::json(nullptr)},
          {"confusion_counts", counts},
          {"confusion_normalized", norm},
          {"empty_truth_classes", empty}};
}

}  // namespace

double pixel_accuracy(const LabelMap& pred, const LabelMap& truth) {
  require_same(pred, truth);
  if (pred.pixel_count() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.pixel_count(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(pred.pixel_count());
}

double ConfusionMatrix::accuracy() const {
  return total() == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(total());
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  counts += other.counts;
  normalize(*this);
  return *this;
}

void normalize(ConfusionMatrix& m) {
  for (int b = 0; b < kClassCount; ++b) {
    const std::uint64_t col = m.counts.col(b).sum();
    m.empty_column[b] = col == 0;
    for (int a = 0; a < kClassCount; ++a) {
      m.normalized(a, b) = col == 0 ? 0.0 : static_cast<double>(m.counts(a, b)) / static_cast<double>(col);
    }
  }
}

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& truth) {
  require_same(pred, truth);
  ConfusionMatrix m;
  for (std::size_t i = 0; i < pred.pixel_count(); ++i) ++m.counts(pred[i], truth[i]);
  normalize(m);
  return m;
}

double ssim(const Raster& a, const Raster& b, const SsimParams& p) {
  if (a.width() != b.width() || a.height() != b.height()) throw Error(ErrorCode::DimensionMismatch, "ssim inputs differ in size");
  if (!(p.c1 > 0.0 && p.c2 > 0.0)) throw Error(ErrorCode::BadConfig, "ssim constants must be positive");
  const Plane la = luma_plane(a), lb = luma_plane(b);
  return p.window == SsimWindow::Block8 ? blocks(la, lb, p) : gaussian(la, lb, p);
}

EvalReport evaluate_tiles(const std::vector<TileEval>& tiles, const SsimParams& p) {
  std::vector<ConfusionMatrix> per(tiles.size());
  std::vector<double> scores(tiles.size());
  parallel_for(tiles.size(), [&](std::size_t i) {
    per[i] = confusion(tiles[i].pred, tiles[i].truth);
    scores[i] = ssim(render_labels(tiles[i].pred), render_labels(tiles[i].truth), p);
  });
  EvalReport r;
  double ssim_sum = 0.0;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    r.tile_ids.push_back(tiles[i].id);
    auto& stratum = tiles[i].cloud_fraction > kCloudyCutoff ? r.cloudy : r.clear;
    for (auto* s : {&r.overall, &stratum}) {
      ++s->tiles;
      s->confusion.counts += per[i].counts;
    }
    ssim_sum += scores[i];
  }
  for (auto* s : {&r.overall, &r.cloudy, &r.clear}) normalize(s->confusion);
  r.ssim_mean = tiles.empty() ? 0.0 : ssim_sum / static_cast<double>(tiles.size());
  return r;
}

EvalReport evaluate_run(const std::filesystem::path& pred_dir, const std::filesystem::path& truth_dir,
                        const std::map<std::string, double>& cloud_fractions, const SsimParams& p) {
  auto pngs = [](const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::FileNotFound, dir.string());
    std::set<std::string> names;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".png") names.insert(e.path().filename().string());
    }
    return names;
  };
  const auto preds = pngs(pred_dir), truths = pngs(truth_dir);
  for (const auto& n : preds) {
    if (!truths.count(n)) throw Error(ErrorCode::MissingPair, "no truth label for " + n);
  }
  for (const auto& n : truths) {
    if (!preds.count(n)) throw Error(ErrorCode::MissingPair, "no prediction for " + n);
  }
  std::vector<std::string> names(preds.begin(), preds.end());
  std::vector<TileEval> tiles(names.size());
  parallel_for(names.size(), [&](std::size_t i) {
    auto id = std::filesystem::path(names[i]).stem().string();
    if (id.size() > 6 && id.ends_with("_label")) id.resize(id.size() - 6);
    const auto it = cloud_fractions.find(id);
    tiles[i] = {id, parse_labels(load_png(pred_dir / names[i])), parse_labels(load_png(truth_dir / names[i])),
                it == cloud_fractions.end() ? 0.0 : it->second};
  });
  return evaluate_tiles(tiles, p);
}

nlohmann::json report_to_json(const EvalReport& r) {
  return {{"overall", stratum_json(r.overall)},
          {"strata",
           {{"cloudy", stratum_json(r.cloudy)},
            {"clear", stratum_json(r.clear)},
            {"cutoff", kCloudyCutoff},
            {"rule", "cloud_fraction > cutoff is cloudy"}}},
          {"ssim_mean", r.ssim_mean},
          {"ssim_aggregation", "mean of per-tile SSIM on rendered label luma"},
          {"tiles", r.tile_ids}};
}

}  // namespace floeseg
