#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "floeseg/calibserver.hpp"
#include "floeseg/error.hpp"
#include "test_util.hpp"

// After the library headers: httplib pulls in system macros Eigen trips on.
#include "httplib.h"

using namespace floeseg;
using floeseg::testing::TempDir;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

// Two scenes: a white 16x8 one and a black/white split 8x8 one.
void write_scenes(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_png(Raster(16, 8, 3, 255), dir / "white.png");
  std::vector<std::uint8_t> d(8 * 8 * 3, 0);
  for (std::size_t i = 0; i < d.size() / 2; ++i) d[i] = 255;
  save_png(Raster(8, 8, 3, d), dir / "split.png");
  std::ofstream(dir / "notes.txt") << "ignored";
}

nlohmann::json bad_profile() {
  auto j = profile_to_json(default_profile());
  j["classes"]["water"]["hi"][2] = 300;
  return j;
}

}  // namespace

TEST(Service, SceneDirErrors) {
  TempDir dir("svc_empty");
  EXPECT_EQ(code_of([&] { CalibrationService(dir / "missing", dir / "p.json"); }), ErrorCode::EmptySceneDir);
  EXPECT_EQ(code_of([&] { CalibrationService(dir.path(), dir / "p.json"); }), ErrorCode::EmptySceneDir);
}

TEST(Service, ScenesAndPngs) {
  TempDir dir("svc_scenes");
  write_scenes(dir / "scenes");
  const CalibrationService svc(dir / "scenes", dir / "p.json");
  const auto list = svc.scenes();
  ASSERT_EQ(list.size(), 2u);
  EXPECT_EQ(list[0].id, "split");
  EXPECT_EQ(list[1].id, "white");
  EXPECT_EQ(list[1].width, 16);
  EXPECT_EQ(list[1].height, 8);

  const auto full = decode_png(svc.scene_png("white", 1));
  EXPECT_EQ(full.width(), 16);
  const auto half = decode_png(svc.scene_png("white", 2));
  EXPECT_EQ(half.width(), 8);
  EXPECT_EQ(half.height(), 4);
  EXPECT_EQ(code_of([&] { svc.scene_png("nope", 1); }), ErrorCode::UnknownScene);
  EXPECT_EQ(code_of([&] { svc.scene_png("white", 0); }), ErrorCode::BadRange);
}

TEST(Service, SegmentFractionsAndStableOverlay) {
  TempDir dir("svc_seg");
  write_scenes(dir / "scenes");
  const CalibrationService svc(dir / "scenes", dir / "p.json");
  SegmentRequest req;
  req.scene_id = "white";
  req.profile = default_profile();
  const auto a = svc.segment(req);
  EXPECT_EQ(a.fractions[0], 1.0);
  EXPECT_EQ(a.fractions[1], 0.0);
  EXPECT_EQ(a.fractions[2], 0.0);
  EXPECT_TRUE(a.profile_report.exact);
  EXPECT_EQ(svc.segment(req).overlay_png, a.overlay_png);
  EXPECT_EQ(parse_labels(decode_png(a.overlay_png)), LabelMap(16, 8, IceClass::Thick));

  req.scene_id = "split";
  const auto b = svc.segment(req);
  EXPECT_DOUBLE_EQ(b.fractions[0], 0.5);
  EXPECT_DOUBLE_EQ(b.fractions[2], 0.5);
  req.downscale = 2;
  EXPECT_EQ(svc.segment(req).width, 4);

  req.apply_filter = true;
  EXPECT_EQ(svc.segment(req).overlay_png, svc.segment(req).overlay_png);

  req.profile.classes[2].hi.v = 300;
  EXPECT_EQ(code_of([&] { svc.segment(req); }), ErrorCode::InvalidProfile);
  req.profile = default_profile();
  req.scene_id = "nope";
  EXPECT_EQ(code_of([&] { svc.segment(req); }), ErrorCode::UnknownScene);
}

TEST(Service, ProfileStore) {
  TempDir dir("svc_prof");
  write_scenes(dir / "scenes");
  CalibrationService svc(dir / "scenes", dir / "p.json");
  EXPECT_EQ(svc.profile_json(), profile_to_json(default_profile()).dump(2) + "\n");

  auto j = profile_to_json(default_profile());
  j["name"] = "late-summer";
  j["classes"]["thin"]["lo"][2] = 40;
  const std::string body = j.dump() + "  \n";  // stored verbatim, whitespace included
  svc.put_profile(body);
  EXPECT_EQ(svc.profile_json(), body);
  EXPECT_EQ(load_profile(dir / "p.json").name, "late-summer");

  EXPECT_EQ(code_of([&] { svc.put_profile("{not json"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([&] { svc.put_profile(bad_profile().dump()); }), ErrorCode::InvalidProfile);
  EXPECT_EQ(svc.profile_json(), body);
}

TEST(Segment, RequestParsing) {
  nlohmann::json j{{"scene_id", "a"}, {"profile", profile_to_json(default_profile())}, {"downscale", 4}};
  const auto r = segment_request_from_json(j);
  EXPECT_EQ(r.scene_id, "a");
  EXPECT_EQ(r.downscale, 4);
  EXPECT_FALSE(r.apply_filter);
  EXPECT_EQ(code_of([&] { segment_request_from_json({{"scene_id", "a"}}); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([&] { segment_request_from_json(nlohmann::json::array()); }), ErrorCode::ParseError);
  j["profile"] = bad_profile();
  EXPECT_EQ(code_of([&] { segment_request_from_json(j); }), ErrorCode::InvalidProfile);
}

TEST(Base64, RoundTrip) {
  EXPECT_EQ(base64_encode({}), "");
  const std::string s = "any carnal pleas";
  EXPECT_EQ(base64_encode({s.begin(), s.begin() + 1}), "YQ==");
  EXPECT_EQ(base64_encode({s.begin(), s.begin() + 2}), "YW4=");
  EXPECT_EQ(base64_encode({s.begin(), s.begin() + 3}), "YW55");
  std::mt19937_64 rng(1);
  for (std::size_t n = 0; n < 40; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    ASSERT_EQ(base64_decode(base64_encode(bytes)), bytes) << n;
  }
}

class Http : public ::testing::Test {
 protected:
  void SetUp() override {
    write_scenes(dir_ / "scenes");
    server_ = std::make_unique<CalibServer>(dir_ / "scenes", dir_ / "profile.json");
    port_ = server_->bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_->listen(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    for (int i = 0; i < 200 && !client_->Get("/api/scenes"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  void TearDown() override {
    server_->stop();
    thread_.join();
  }

  TempDir dir_{"http"};
  std::unique_ptr<CalibServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(Http, ScenesAndImages) {
  auto res = client_->Get("/api/scenes");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto list = nlohmann::json::parse(res->body);
  ASSERT_EQ(list.size(), 2u);
  EXPECT_EQ(list[1], (nlohmann::json{{"id", "white"}, {"width", 16}, {"height", 8}}));

  res = client_->Get("/api/scenes/white.png?downscale=2");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  const auto img = decode_png(std::vector<std::uint8_t>(res->body.begin(), res->body.end()));
  EXPECT_EQ(img.width(), 8);

  res = client_->Get("/api/scenes/nope.png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(nlohmann::json::parse(res->body)["error"], "UnknownScene");
  res = client_->Get("/api/scenes/white.png?downscale=0");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(nlohmann::json::parse(res->body)["error"], "BadRange");
}

TEST_F(Http, Segment) {
  nlohmann::json req{{"scene_id", "split"}, {"profile", profile_to_json(default_profile())}};
  auto res = client_->Post("/api/segment", req.dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const auto j = nlohmann::json::parse(res->body);
  EXPECT_EQ(j["width"], 8);
  EXPECT_DOUBLE_EQ(j["fractions"]["thick"].get<double>(), 0.5);
  EXPECT_EQ(j["profile_report"]["exact"], true);
  EXPECT_TRUE(j.contains("elapsed_ms"));
  const auto overlay = decode_png(base64_decode(j["overlay_png"].get<std::string>()));
  EXPECT_EQ(overlay.width(), 8);
  EXPECT_EQ(overlay.channels(), 3);

  req["profile"] = bad_profile();
  res = client_->Post("/api/segment", req.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  const auto err = nlohmann::json::parse(res->body);
  EXPECT_EQ(err["error"], "InvalidProfile");
  EXPECT_TRUE(err["message"].is_string());

  res = client_->Post("/api/segment", "{oops", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(nlohmann::json::parse(res->body)["error"], "ParseError");
}

TEST_F(Http, ProfileRoundTrip) {
  auto res = client_->Get("/api/profile");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->body, profile_to_json(default_profile()).dump(2) + "\n");

  auto j = profile_to_json(default_profile());
  j["region"] = "Ross Sea";
  const std::string body = j.dump(4);
  res = client_->Put("/api/profile", body, "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  res = client_->Get("/api/profile");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->body, body);

  res = client_->Put("/api/profile", bad_profile().dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(client_->Get("/api/profile")->body, body);
}

TEST_F(Http, IndexPlaceholder) {
  auto res = client_->Get("/");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_NE(res->body.find("/api/"), std::string::npos);
}

TEST_F(Http, PortInUse) {
  CalibServer other(dir_ / "scenes", dir_ / "profile.json");
  EXPECT_EQ(code_of([&] { other.bind("127.0.0.1", port_); }), ErrorCode::PortInUse);
}
