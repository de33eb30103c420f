#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "floeseg/cloudfilter.hpp"
#include "floeseg/colorseg.hpp"
#include "floeseg/raster.hpp"

namespace floeseg {

struct SegmentRequest {
  std::string scene_id;
  ThresholdProfile profile;
  bool apply_filter = false;
  int downscale = 1;
};

struct SegmentResponse {
  std::vector<std::uint8_t> overlay_png;
  std::array<double, kClassCount> fractions{};
  ProfileReport profile_report;
  int width = 0;
  int height = 0;
  double elapsed_ms = 0.0;
};

/// Throws ParseError or InvalidProfile naming the offending field.
SegmentRequest segment_request_from_json(const nlohmann::json& j);
nlohmann::json segment_response_to_json(const SegmentResponse& r);
nlohmann::json profile_report_to_json(const ProfileReport& r);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// Scenes, profile store and request handlers, independent of the HTTP layer.
class CalibrationService {
 public:
  /// Loads every PNG under scene_dir (id = file stem). Throws EmptySceneDir.
  CalibrationService(const std::filesystem::path& scene_dir, std::filesystem::path profile_path,
                     CloudFilterParams filter = {});

  struct SceneInfo {
    std::string id;
    int width;
    int height;
  };
  std::vector<SceneInfo> scenes() const;
  bool has_scene(const std::string& id) const { return scenes_.count(id) != 0; }

  /// Box-downscaled scene as PNG. Throws UnknownScene, BadRange.
  std::vector<std::uint8_t> scene_png(const std::string& id, int downscale) const;

  /// Optional filter (full resolution, cached), downscale, then auto-label.
  /// Throws UnknownScene, InvalidProfile, BadRange.
  SegmentResponse segment(const SegmentRequest& req) const;

  /// Persisted profile bytes, or the default profile when nothing is stored.
  std::string profile_json() const;
  /// Validates the body and stores it verbatim via temp file and rename.
  /// Throws ParseError or InvalidProfile.
  void put_profile(const std::string& body);

 private:
  const Raster& scene(const std::string& id, bool filtered) const;

  std::map<std::string, Raster> scenes_;
  std::filesystem::path profile_path_;
  CloudFilterParams filter_;
  mutable std::mutex filtered_mutex_;
  mutable std::map<std::string, Raster> filtered_;
  mutable std::mutex profile_mutex_;
  std::uint64_t writes_ = 0;
};

/// HTTP front end. GET /api/scenes, GET /api/scenes/{id}.png?downscale=k,
/// POST /api/segment, GET|PUT /api/profile, and the UI bundle under /.
class CalibServer {
 public:
  CalibServer(const std::filesystem::path& scene_dir, const std::filesystem::path& profile_path,
              std::filesystem::path ui_dir = {});
  ~CalibServer();
  CalibServer(const CalibServer&) = delete;
  CalibServer& operator=(const CalibServer&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  /// Throws PortInUse.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

  CalibrationService& service() { return service_; }

 private:
  struct Impl;
  CalibrationService service_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace floeseg
