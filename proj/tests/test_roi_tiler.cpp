// Copyright 2026 The comrp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "comrp/error.hpp"
#include "comrp/roi_tiler.hpp"
#include "test_util.hpp"

using namespace comrp;

TEST_SUITE("roi_tiler") {
  TEST_CASE("denormalize_box worked examples") {
    CHECK(denormalize_box({0, 0, 1, 1}, 7952, 5304, 1024) == BBox{0, 0, 7952, 5304});
    CHECK(denormalize_box({0.5, 0.5, 0.75, 0.75}, 7952, 5304, 1024) == BBox{3976, 2652, 5964, 3978});
    CHECK_THROWS_AS(denormalize_box({0.1, 0.1, 0.1, 0.2}, 7952, 5304, 1024), DegenerateBox);
  }

  TEST_CASE("denormalize_box rounds outward and clamps") {
    // 0.3 * 1000 = 300 exactly after snapping; 0.3001 * 1000 = 300.1 -> ceil 301.
    CHECK(denormalize_box({0.1, 0.2, 0.3001, 0.4}, 1000, 500, 1000) == BBox{100, 100, 301, 200});
    CHECK(denormalize_box({0.10005, 0, 1.2, 1}, 1000, 500, 1000) == BBox{100, 0, 1000, 500});
  }

  TEST_CASE("normalize then denormalize stays within one pixel") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::uint32_t> dim(50, 9000);
    for (int i = 0; i < 500; ++i) {
      const std::uint32_t w = dim(rng), h = dim(rng);
      std::uniform_int_distribution<std::uint32_t> xs(0, w - 2), ys(0, h - 2);
      std::uint32_t x0 = xs(rng), y0 = ys(rng);
      std::uint32_t x1 = std::uniform_int_distribution<std::uint32_t>(x0 + 1, w)(rng);
      std::uint32_t y1 = std::uniform_int_distribution<std::uint32_t>(y0 + 1, h)(rng);
      const BBox box{x0, y0, x1, y1};
      const BBox back = denormalize_box(normalize_box(box, w, h, 1024), w, h, 1024);
      REQUIRE(std::abs(int(back.x_min) - int(x0)) <= 1);
      REQUIRE(std::abs(int(back.y_min) - int(y0)) <= 1);
      REQUIRE(std::abs(int(back.x_max) - int(x1)) <= 1);
      REQUIRE(std::abs(int(back.y_max) - int(y1)) <= 1);
    }
  }

  TEST_CASE("plan_tiles worked examples") {
    const auto single = plan_tiles({100, 200, 900, 1000}, 800, 4000, 3000);
    REQUIRE(single.tiles.size() == 1);
    CHECK(single.tiles[0] == TileOffset{100, 200});

    // 1200 wide: x, then the second tile shifted left to end at the box edge.
    const auto two = plan_tiles({100, 200, 1300, 1000}, 800, 4000, 3000);
    REQUIRE(two.tiles.size() == 2);
    CHECK(two.tiles[0] == TileOffset{100, 200});
    CHECK(two.tiles[1] == TileOffset{500, 200});

    CHECK_THROWS_AS(plan_tiles({0, 0, 640, 480}, 800, 640, 2000), TileExceedsImage);
  }

  TEST_CASE("plan_tiles covers the box and stays in the image") {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 300; ++i) {
      const std::uint32_t w = std::uniform_int_distribution<std::uint32_t>(64, 700)(rng);
      const std::uint32_t h = std::uniform_int_distribution<std::uint32_t>(64, 700)(rng);
      const std::uint32_t tile = std::uniform_int_distribution<std::uint32_t>(8, std::min(w, h))(rng);
      const std::uint32_t x0 = std::uniform_int_distribution<std::uint32_t>(0, w - 1)(rng);
      const std::uint32_t y0 = std::uniform_int_distribution<std::uint32_t>(0, h - 1)(rng);
      const std::uint32_t x1 = std::uniform_int_distribution<std::uint32_t>(x0 + 1, w)(rng);
      const std::uint32_t y1 = std::uniform_int_distribution<std::uint32_t>(y0 + 1, h)(rng);
      const auto plan = plan_tiles({x0, y0, x1, y1}, tile, w, h);
      std::vector<std::uint8_t> covered(std::size_t(w) * h, 0);
      for (const auto& t : plan.tiles) {
        REQUIRE(t.x + tile <= w);
        REQUIRE(t.y + tile <= h);
        for (std::uint32_t y = t.y; y < t.y + tile; ++y)
          for (std::uint32_t x = t.x; x < t.x + tile; ++x) covered[std::size_t(y) * w + x] = 1;
      }
      for (std::uint32_t y = y0; y < y1; ++y)
        for (std::uint32_t x = x0; x < x1; ++x) REQUIRE(covered[std::size_t(y) * w + x] == 1);
    }
  }

  TEST_CASE("cut_tiles copies exact sub-images") {
    std::mt19937_64 rng(13);
    const RgbImage img = comrp::testing::random_rgb(50, 40, rng);
    auto plan = plan_tiles({0, 0, 50, 40}, 30, 50, 40);
    plan.source_image_id = "im";
    const auto tiles = cut_tiles(img, plan);
    REQUIRE(tiles.size() == plan.tiles.size());
    REQUIRE(tiles.size() == 4);
    CHECK(tiles[0].tile_id == "im_0_0");
    CHECK(tiles[1].tile_id == "im_20_0");
    CHECK(tiles[3].tile_id == "im_20_10");
    for (std::size_t i = 0; i < tiles.size(); ++i) {
      const auto& t = plan.tiles[i];
      CHECK(tiles[i].pixels == sub_image(img, t.x, t.y, t.x + 30, t.y + 30));
    }
    // Overlap between tile 0 and tile 1 is x in [20, 30).
    for (std::uint32_t y = 0; y < 30; ++y) {
      for (std::uint32_t x = 20; x < 30; ++x) {
        for (int c = 0; c < 3; ++c) REQUIRE(tiles[0].pixels.at(x, y)[c] == tiles[1].pixels.at(x - 20, y)[c]);
      }
    }

    auto single = plan_tiles({5, 5, 35, 35}, 30, 50, 40);
    single.source_image_id = "im";
    const auto one = cut_tiles(img, single);
    REQUIRE(one.size() == 1);
    CHECK(one[0].pixels == sub_image(img, 5, 5, 35, 35));
  }

  TEST_CASE("detection files carry thresholds and keep flags") {
    comrp::testing::TempDir dir;
    const nlohmann::json j = {
        {"image_id", "uav1"},
        {"detections",
         {{{"box", {0.1, 0.2, 0.5, 0.6}}, {"score", 0.8}, {"label", "road"}, {"keep", false}},
          {{"box", {0.0, 0.0, 1.0, 1.0}}, {"score", 0.5}, {"label", "road"}}}}};
    std::ofstream(dir / "uav1.json") << j.dump();
    const auto f = read_detection_file(dir / "uav1.json");
    CHECK(f.resize_long_side == 1024);
    CHECK(f.box_threshold == doctest::Approx(0.35));
    CHECK(f.text_threshold == doctest::Approx(0.25));
    REQUIRE(f.detections.size() == 2);
    CHECK_FALSE(f.detections[0].keep);
    CHECK(f.detections[1].keep);
    CHECK(f.detections[0].box.y1 == doctest::Approx(0.6));
    CHECK(read_detection_dir(dir.path()).size() == 1);

    std::ofstream(dir / "bad.json") << R"({"image_id":"b","detections":[{"box":[0.5,0,0.2,1],"score":0.1}]})";
    CHECK_THROWS_AS(read_detection_file(dir / "bad.json"), FormatError);
  }
}
