#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "sigma/backbone/backbone.hpp"
#include "sigma/core/digest.hpp"
#include "sigma/core/errors.hpp"
#include "sigma/core/rng.hpp"

using namespace sigma;
using namespace sigma::backbone;

namespace {

RgbImage random_image(std::size_t side, std::uint64_t seed) {
  Rng rng(seed);
  RgbImage img(side, side);
  for (auto& v : img.storage()) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

BackboneSpec small_spec() {
  BackboneSpec s;
  s.patch_size = 7;
  s.embed_dim = 16;
  s.seed = 3;
  return s;
}

}  // namespace

TEST_CASE("patch_grid") {
  CHECK(patch_grid(518, 14) == PatchGrid{37, 37});
  CHECK(patch_grid(518, 14).tokens() == 1369);
  CHECK(patch_grid(14, 14) == PatchGrid{1, 1});
  CHECK(patch_grid(280, 14) == PatchGrid{20, 20});
  CHECK_THROWS_AS(patch_grid(500, 14), IndivisibleSide);
  CHECK_THROWS_AS(patch_grid(14, 0), IndivisibleSide);
}

TEST_CASE("spec validation") {
  BackboneSpec s;
  CHECK_NOTHROW(s.validate(518));
  CHECK_THROWS_AS(s.validate(500), InvalidSpec);
  s.layer_indices = {2, 2, 11};
  CHECK_THROWS_AS(s.validate(518), InvalidSpec);
  CHECK(provider_kind_from_string(to_string(ProviderKind::external_vit)) == ProviderKind::external_vit);
  CHECK_THROWS_AS(provider_kind_from_string("resnet"), ConfigInvalid);
}

TEST_CASE("synthetic provider: default shapes at the working side") {
  const auto provider = make_provider(BackboneSpec{});
  const MultiLevelFeatures f = extract_features(random_image(518, 1), *provider);
  CHECK(f.grid == PatchGrid{37, 37});
  for (const Tensor& level : f.levels) {
    CHECK(level.rows() == 1369);
    CHECK(level.cols() == 768);
    CHECK(level.all_finite());
  }
}

TEST_CASE("synthetic provider: deterministic and level-distinct") {
  SyntheticBackbone a(small_spec()), b(small_spec());
  const RgbImage img = random_image(56, 2);
  const auto fa = a.extract(img), fb = b.extract(img);
  for (std::size_t l = 0; l < kLevels; ++l) CHECK(fa.levels[l].storage() == fb.levels[l].storage());
  CHECK(fa.levels[0].storage() != fa.levels[1].storage());
  CHECK(fa.levels[1].storage() != fa.levels[2].storage());
  CHECK(a.checksum() == b.checksum());
  BackboneSpec other = small_spec();
  other.seed = 4;
  CHECK(SyntheticBackbone(other).checksum() != a.checksum());
}

TEST_CASE("synthetic provider: horizontal flip permutes grid columns") {
  SyntheticBackbone provider(small_spec());
  const RgbImage img = random_image(56, 5);
  const auto f = provider.extract(img);
  const auto g = provider.extract(flip_horizontal(img));
  const std::size_t cols = f.grid.cols;
  for (std::size_t r = 0; r < f.grid.rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t t = r * cols + c, mirrored = r * cols + (cols - 1 - c);
      for (std::size_t j = 0; j < f.dim(); ++j) CHECK(f.levels[0](t, j) == doctest::Approx(g.levels[0](mirrored, j)).epsilon(1e-12));
    }
}

TEST_CASE("synthetic provider: statistics oracle and locality") {
  SyntheticBackbone provider(small_spec());
  RgbImage img(14, 14, 0);
  for (std::size_t y = 0; y < 7; ++y)
    for (std::size_t x = 0; x < 7; ++x) img.at(x, y, 0) = (x + y) % 2 ? 255 : 0;
  const Tensor s = provider.patch_statistics(img);
  REQUIRE(s.rows() == 4);
  // Patch 0 red channel: 24 of 49 pixels at 255.
  const double hi = (1.0 - kPixelMean[0]) / kPixelStd[0], lo = -kPixelMean[0] / kPixelStd[0];
  const double mean = (24 * hi + 25 * lo) / 49.0;
  const double var = (24 * (hi - mean) * (hi - mean) + 25 * (lo - mean) * (lo - mean)) / 49.0;
  CHECK(s(0, 0) == doctest::Approx(mean));
  CHECK(s(0, 3) == doctest::Approx(std::sqrt(var)));
  CHECK(s(1, 3) == doctest::Approx(0.0));

  RgbImage edited = img;
  edited.at(10, 10, 1) = 200;  // patch 3 only
  const auto f = provider.extract(img), g = provider.extract(edited);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < f.dim(); ++j) CHECK(f.levels[0](t, j) == g.levels[0](t, j));
  CHECK(f.levels[0].row(3)[0] != g.levels[0].row(3)[0]);
}

TEST_CASE("external provider: unreachable endpoint raises ProviderUnavailable") {
  BackboneSpec s = small_spec();
  s.provider = ProviderKind::external_vit;
  CHECK_THROWS_AS(make_provider(s), ProviderUnavailable);
  s.endpoint = "http://127.0.0.1:1/features";
  s.timeout_seconds = 2;
  const auto provider = make_provider(s);
  CHECK_THROWS_AS(provider->extract(random_image(14, 1)), ProviderUnavailable);
}

TEST_CASE("external provider: decodes a served reply") {
  SyntheticBackbone reference(small_spec());
  const RgbImage img = random_image(28, 9);
  const auto expected = reference.extract(img);

  httplib::Server server;
  server.Post("/features", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    CHECK(body.at("layers") == nlohmann::json({2, 5, 11}));
    CHECK(body.at("image_png_base64").get<std::string>().size() > 0);
    nlohmann::json reply{{"grid", {expected.grid.rows, expected.grid.cols}}, {"dim", expected.dim()}};
    for (const Tensor& level : expected.levels) reply["levels"].push_back(level.storage());
    res.set_content(reply.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  BackboneSpec s = small_spec();
  s.provider = ProviderKind::external_vit;
  s.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/features";
  const auto got = make_provider(s)->extract(img);
  server.stop();
  worker.join();
  for (std::size_t l = 0; l < kLevels; ++l) CHECK(got.levels[l].storage() == expected.levels[l].storage());
}

TEST_CASE("digest helpers") {
  CHECK(sha256_hex(std::string_view("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const std::uint8_t bytes[] = {'f', 'o', 'o', 'b', 'a'};
  CHECK(base64_encode(bytes) == "Zm9vYmE=");
}
