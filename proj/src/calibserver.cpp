#include "floeseg/calibserver.hpp"

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include <chrono>
#include <fstream>
#include <sstream>

#include "httplib.h"

#include "floeseg/error.hpp"

namespace floeseg {

namespace {

namespace bi = boost::archive::iterators;

const char* kPlaceholder =
    "<!doctype html><html><head><title>floeseg calibration</title></head><body>"
    "<h1>floeseg calibration server</h1><p>No UI bundle is installed. The API lives under /api/.</p>"
    "</body></html>\n";

nlohmann::json gaps_json(const std::vector<VGap>& gaps) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& g : gaps) out.push_back(nlohmann::json::array({g.lo, g.hi}));
  return out;
}

std::string error_body(const Error& e) {
  return nlohmann::json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}}.dump();
}

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  using It = bi::base64_from_binary<bi::transform_width<std::vector<std::uint8_t>::const_iterator, 6, 8>>;
  std::string out(It(bytes.begin()), It(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  using It = bi::transform_width<bi::binary_from_base64<std::string::const_iterator>, 8, 6>;
  const std::string body = text.substr(0, text.find_last_not_of('=') + 1);
  try {
    std::vector<std::uint8_t> out(It(body.begin()), It(body.end()));
    // The iterator may emit one trailing partial byte.
    out.resize(body.size() * 6 / 8);
    return out;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad base64: ") + e.what());
  }
}

nlohmann::json profile_report_to_json(const ProfileReport& r) {
  return {{"disjoint", r.disjoint},
          {"covering", r.covering},
          {"gaps", gaps_json(r.gaps)},
          {"overlaps", gaps_json(r.overlaps)},
          {"exact", r.exact}};
}

SegmentRequest segment_request_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "request must be a JSON object");
  SegmentRequest r;
  try {
    r.scene_id = j.at("scene_id").get<std::string>();
    r.apply_filter = j.value("apply_filter", false);
    r.downscale = j.value("downscale", 1);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("segment request: ") + e.what());
  }
  if (!j.contains("profile")) throw Error(ErrorCode::ParseError, "segment request: missing profile");
  r.profile = profile_from_json(j.at("profile"));
  check_profile_bounds(r.profile);
  return r;
}

nlohmann::json segment_response_to_json(const SegmentResponse& r) {
  return {{"overlay_png", base64_encode(r.overlay_png)},
          {"width", r.width},
          {"height", r.height},
          {"fractions", {{"thick", r.fractions[0]}, {"thin", r.fractions[1]}, {"water", r.fractions[2]}}},
          {"profile_report", profile_report_to_json(r.profile_report)},
          {"elapsed_ms", r.elapsed_ms}};
}

CalibrationService::CalibrationService(const std::filesystem::path& scene_dir, std::filesystem::path profile_path,
                                       CloudFilterParams filter)
    : profile_path_(std::move(profile_path)), filter_(filter) {
  validate(filter_);
  if (!std::filesystem::is_directory(scene_dir)) throw Error(ErrorCode::EmptySceneDir, scene_dir.string() + " is not a directory");
  for (const auto& e : std::filesystem::directory_iterator(scene_dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".png") continue;
    Raster r = load_png(e.path());
    if (r.channels() != 3) throw Error(ErrorCode::WrongChannelCount, e.path().string() + " is not RGB");
    scenes_.emplace(e.path().stem().string(), std::move(r));
  }
  if (scenes_.empty()) throw Error(ErrorCode::EmptySceneDir, "no PNG scenes in " + scene_dir.string());
}

std::vector<CalibrationService::SceneInfo> CalibrationService::scenes() const {
  std::vector<SceneInfo> out;
  for (const auto& [id, r] : scenes_) out.push_back({id, r.width(), r.height()});
  return out;
}

const Raster& CalibrationService::scene(const std::string& id, bool filtered) const {
  const auto it = scenes_.find(id);
  if (it == scenes_.end()) throw Error(ErrorCode::UnknownScene, "unknown scene " + id);
  if (!filtered) return it->second;
  std::lock_guard lock(filtered_mutex_);
  auto f = filtered_.find(id);
  if (f == filtered_.end()) f = filtered_.emplace(id, filter_thin_clouds_shadows(it->second, filter_)).first;
  return f->second;
}

std::vector<std::uint8_t> CalibrationService::scene_png(const std::string& id, int k) const {
  if (k < 1) throw Error(ErrorCode::BadRange, "downscale must be >= 1");
  const auto& r = scene(id, false);
  return encode_png(k == 1 ? r : downscale(r, k));
}

SegmentResponse CalibrationService::segment(const SegmentRequest& req) const {
  const auto start = std::chrono::steady_clock::now();
  if (req.downscale < 1) throw Error(ErrorCode::BadRange, "downscale must be >= 1");
  check_profile_bounds(req.profile);
  const auto& full = scene(req.scene_id, req.apply_filter);
  const Raster view = req.downscale == 1 ? full : downscale(full, req.downscale);
  const auto labels = autolabel(view, req.profile);

  SegmentResponse out;
  out.overlay_png = encode_png(render_labels(labels));
  out.width = labels.width();
  out.height = labels.height();
  const auto hist = labels.histogram();
  for (int c = 0; c < kClassCount; ++c) {
    out.fractions[c] = labels.pixel_count() ? static_cast<double>(hist[c]) / static_cast<double>(labels.pixel_count()) : 0.0;
  }
  out.profile_report = validate_profile(req.profile);
  out.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::string CalibrationService::profile_json() const {
  std::lock_guard lock(profile_mutex_);
  if (!profile_path_.empty() && std::filesystem::is_regular_file(profile_path_)) {
    std::ifstream in(profile_path_, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }
  return profile_to_json(default_profile()).dump(2) + "\n";
}

void CalibrationService::put_profile(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("profile body: ") + e.what());
  }
  check_profile_bounds(profile_from_json(j));
  if (profile_path_.empty()) throw Error(ErrorCode::IoError, "no profile path configured");

  std::lock_guard lock(profile_mutex_);
  const auto tmp = profile_path_.string() + ".tmp" + std::to_string(writes_++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
    out << body;
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, profile_path_);
}

struct CalibServer::Impl {
  httplib::Server http;
};

CalibServer::CalibServer(const std::filesystem::path& scene_dir, const std::filesystem::path& profile_path,
                         std::filesystem::path ui_dir)
    : service_(scene_dir, profile_path), impl_(std::make_unique<Impl>()) {
  auto& http = impl_->http;
  auto& svc = service_;
  // httplib defaults to SO_REUSEPORT, which lets a second server share a busy
  // port silently. SO_REUSEADDR alone still allows quick restarts.
  http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });

  auto fail = [](httplib::Response& res, int status, const Error& e) {
    res.status = status;
    res.set_content(error_body(e), "application/json");
  };

  http.Get("/api/scenes", [&svc](const httplib::Request&, httplib::Response& res) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& s : svc.scenes()) list.push_back({{"id", s.id}, {"width", s.width}, {"height", s.height}});
    res.set_content(list.dump(), "application/json");
  });

  http.Get(R"(/api/scenes/([^/]+)\.png)", [&svc, fail](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (!svc.has_scene(id)) return fail(res, 404, Error(ErrorCode::UnknownScene, "unknown scene " + id));
    try {
      const int k = req.has_param("downscale") ? std::stoi(req.get_param_value("downscale")) : 1;
      const auto png = svc.scene_png(id, k);
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    } catch (const Error& e) {
      fail(res, 400, e);
    } catch (const std::logic_error&) {
      fail(res, 400, Error(ErrorCode::ParseError, "downscale must be an integer"));
    }
  });

  http.Post("/api/segment", [&svc, fail](const httplib::Request& req, httplib::Response& res) {
    try {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("request body: ") + e.what());
      }
      res.set_content(segment_response_to_json(svc.segment(segment_request_from_json(j))).dump(), "application/json");
    } catch (const Error& e) {
      fail(res, 400, e);
    }
  });

  http.Get("/api/profile", [&svc](const httplib::Request&, httplib::Response& res) {
    res.set_content(svc.profile_json(), "application/json");
  });

  http.Put("/api/profile", [&svc, fail](const httplib::Request& req, httplib::Response& res) {
    try {
      svc.put_profile(req.body);
      res.set_content(req.body, "application/json");
    } catch (const Error& e) {
      fail(res, e.code() == ErrorCode::IoError ? 500 : 400, e);
    }
  });

  if (!ui_dir.empty() && std::filesystem::is_directory(ui_dir)) {
    http.set_mount_point("/", ui_dir.string());
  } else {
    http.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kPlaceholder, "text/html"); });
  }
}

CalibServer::~CalibServer() { stop(); }

int CalibServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->http.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::PortInUse, "cannot bind " + host);
    return bound;
  }
  if (!impl_->http.bind_to_port(host, port)) {
    throw Error(ErrorCode::PortInUse, "port " + std::to_string(port) + " on " + host + " is unavailable");
  }
  return port;
}

void CalibServer::listen() { impl_->http.listen_after_bind(); }

void CalibServer::stop() {
  if (impl_) impl_->http.stop();
}

}  // namespace floeseg
