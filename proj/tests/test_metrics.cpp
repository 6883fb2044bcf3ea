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

#include <algorithm>
#include <cmath>
#include <random>

#include "comrp/error.hpp"
#include "comrp/labeling.hpp"
#include "comrp/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace comrp;

namespace {

GrayImage random_labels(std::mt19937_64& rng, std::uint32_t w, std::uint32_t h, std::uint32_t n, double ignore) {
  GrayImage g(w, h);
  std::bernoulli_distribution skip(ignore);
  for (auto& p : g.pixels) p = skip(rng) ? 255 : static_cast<std::uint8_t>(rng() % n);
  return g;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("accumulate worked examples") {
    GrayImage a(6, 5);
    for (std::size_t p = 0; p < a.pixels.size(); ++p) a.pixels[p] = p % 3;
    const auto diag = confusion(a, a, 3);
    for (std::uint32_t g = 0; g < 3; ++g)
      for (std::uint32_t q = 0; q <= 3; ++q) CHECK(diag.at(g, q) == (g == q ? 10u : 0u));

    const auto off = confusion(GrayImage(10, 10, 0), GrayImage(10, 10, 1), 2);
    CHECK(off.at(0, 1) == 100);
    CHECK(off.total() == 100);

    GrayImage gt(10, 10, 1);
    std::fill(gt.pixels.begin(), gt.pixels.begin() + 30, 255);
    const auto ign = confusion(gt, GrayImage(10, 10, 0), 2);
    CHECK(ign.ignored_pixels == 30);
    CHECK(ign.total() == 70);
    CHECK(ign.at(1, 0) == 70);
  }

  TEST_CASE("accumulate rejects bad inputs") {
    ConfusionMatrix m(3);
    CHECK_THROWS_AS(accumulate(m, GrayImage(2, 2), GrayImage(2, 3)), ShapeMismatch);
    CHECK_THROWS_AS(accumulate(m, GrayImage(2, 2, 3), GrayImage(2, 2)), LabelOutOfRange);
    CHECK_THROWS_AS(accumulate(m, GrayImage(2, 2), GrayImage(2, 2, 7)), LabelOutOfRange);
  }

  TEST_CASE("iou worked examples") {
    const GrayImage g(4, 4, 1);
    CHECK(*iou(confusion(g, g, 2), 1) == 100.0);
    CHECK_FALSE(iou(confusion(g, g, 2), 0).has_value());
    CHECK(*iou(confusion(GrayImage(4, 4, 0), GrayImage(4, 4, 1), 2), 0) == 0.0);

    // gt class 1 on the top-left 2x2 block, pred class 1 on the 2x2 block one
    // column to the right: they share 2 pixels, the union has 6.
    GrayImage gt(4, 4, 0), pred(4, 4, 0);
    for (std::uint32_t y = 0; y < 2; ++y) {
      gt.at(0, y) = gt.at(1, y) = 1;
      pred.at(1, y) = pred.at(2, y) = 1;
    }
    const auto conf = confusion(gt, pred, 2);
    CHECK(*iou(conf, 1) == doctest::Approx(100.0 * 2.0 / 6.0));
    // Class 0: 12 gt pixels, 12 predicted, 10 shared -> 10 / 14.
    CHECK(*iou(conf, 0) == doctest::Approx(100.0 * 10.0 / 14.0));
    // Columns 0 and 2 of the top two rows disagree: 12 of 16 pixels agree.
    CHECK(pixel_accuracy(conf) == doctest::Approx(75.0));
    const auto r = report(conf, {"road", "mark"});
    CHECK(r.miou == doctest::Approx((100.0 * 10.0 / 14.0 + 100.0 * 2.0 / 6.0) / 2.0));
    const auto naive = oracle::naive_scores(gt, pred, 2);
    CHECK(r.per_class_iou[1] == doctest::Approx(naive.iou[1]));
    CHECK(r.pixel_accuracy == doctest::Approx(naive.pixel_accuracy));
  }

  TEST_CASE("pixel accuracy examples") {
    const GrayImage g(4, 4, 1);
    CHECK(pixel_accuracy(confusion(g, g, 2)) == 100.0);
    GrayImage gt(4, 2, 0), pred(4, 2, 0);
    for (std::uint32_t x = 0; x < 4; ++x) gt.at(x, 1) = 1;
    for (std::uint32_t y = 0; y < 2; ++y) pred.at(0, y) = pred.at(1, y) = 1;
    CHECK(pixel_accuracy(confusion(gt, pred, 2)) == 50.0);
    CHECK_THROWS_AS(pixel_accuracy(ConfusionMatrix(2)), EmptyMatrix);
    CHECK_THROWS_AS(pixel_accuracy(confusion(GrayImage(3, 3, 255), GrayImage(3, 3, 0), 2)), EmptyMatrix);
  }

  TEST_CASE("report on perfect and single-class inputs") {
    GrayImage a(8, 8);
    for (std::size_t p = 0; p < a.pixels.size(); ++p) a.pixels[p] = p % 4;
    const auto perfect = report(confusion(a, a, 4));
    CHECK(perfect.miou == 100.0);
    CHECK(perfect.pixel_accuracy == 100.0);
    for (const double v : perfect.per_class_iou) CHECK(v == 100.0);

    GrayImage gt(10, 1, 2), pred(10, 1, 2);
    pred.at(0, 0) = 255;
    const auto single = report(confusion(gt, pred, 5));
    CHECK(single.per_class_presence == std::vector<bool>{false, false, true, false, false});
    CHECK(single.miou == doctest::Approx(90.0));
    CHECK(single.miou == single.per_class_iou[2]);
  }

  TEST_CASE("unlabeled predictions count as false negatives") {
    GrayImage gt(4, 1, 0), pred(4, 1, 0);
    pred.at(3, 0) = kIgnoreLabel;
    const auto conf = confusion(gt, pred, 2);
    CHECK(conf.at(0, conf.unlabeled_column()) == 1);
    CHECK(*iou(conf, 0) == 75.0);
    CHECK(pixel_accuracy(conf) == 75.0);
    CHECK_FALSE(iou(conf, 1).has_value());
  }

  TEST_CASE("confusion metrics match per-pixel set arithmetic on 200 random pairs") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
      const std::uint32_t n = 2 + rng() % 6;
      const std::uint32_t w = 1 + rng() % 24, h = 1 + rng() % 24;
      const GrayImage gt = random_labels(rng, w, h, n, 0.1);
      const GrayImage pred = random_labels(rng, w, h, n, 0.15);
      const bool any_valid = std::any_of(gt.pixels.begin(), gt.pixels.end(), [](auto v) { return v != 255; });
      const auto conf = confusion(gt, pred, n);
      if (!any_valid) {
        REQUIRE_THROWS_AS(pixel_accuracy(conf), EmptyMatrix);
        continue;
      }
      const auto naive = oracle::naive_scores(gt, pred, n);
      REQUIRE(pixel_accuracy(conf) == doctest::Approx(naive.pixel_accuracy).epsilon(1e-12));
      for (std::uint32_t c = 0; c < n; ++c) {
        const auto v = iou(conf, c);
        REQUIRE(v.has_value() == !std::isnan(naive.iou[c]));
        if (!v) continue;
        REQUIRE(*v == doctest::Approx(naive.iou[c]).epsilon(1e-12));
        REQUIRE(*v >= 0.0);
        REQUIRE(*v <= 100.0);
        // IoU never exceeds precision or recall.
        std::uint64_t tp = conf.at(c, c), gt_c = 0, pred_c = 0;
        for (std::uint32_t q = 0; q <= n; ++q) gt_c += conf.at(c, q);
        for (std::uint32_t g = 0; g < n; ++g) pred_c += conf.at(g, c);
        if (gt_c) REQUIRE(*v <= 100.0 * double(tp) / double(gt_c) + 1e-9);
        if (pred_c) REQUIRE(*v <= 100.0 * double(tp) / double(pred_c) + 1e-9);
      }
    }
  }

  TEST_CASE("batch accumulation is order independent") {
    std::mt19937_64 rng(5);
    std::vector<std::pair<GrayImage, GrayImage>> batch;
    for (int i = 0; i < 12; ++i) batch.emplace_back(random_labels(rng, 9, 7, 4, 0.1), random_labels(rng, 9, 7, 4, 0.1));
    ConfusionMatrix forward(4);
    for (const auto& [g, p] : batch) accumulate(forward, g, p);
    for (int round = 0; round < 5; ++round) {
      std::shuffle(batch.begin(), batch.end(), rng);
      ConfusionMatrix left(4), right(4);
      for (std::size_t i = 0; i < batch.size(); ++i) accumulate(i < 5 ? left : right, batch[i].first, batch[i].second);
      right += left;
      CHECK(right == forward);
    }
  }

  TEST_CASE("per-class binary accuracy") {
    GrayImage gt(4, 1, 0), pred(4, 1, 0);
    gt.at(3, 0) = 1;
    pred.at(2, 0) = 1;
    const auto acc = per_class_accuracy(confusion(gt, pred, 2));
    // Both classes: one FP and one FN among four pixels.
    CHECK(acc == std::vector<double>{50.0, 50.0});
  }

  TEST_CASE("evaluate_dirs sums per-image matrices") {
    comrp::testing::TempDir dir;
    std::mt19937_64 rng(6);
    ConfusionMatrix expected(3);
    std::filesystem::create_directories(dir / "gt");
    std::filesystem::create_directories(dir / "pred");
    for (int i = 0; i < 4; ++i) {
      const auto g = random_labels(rng, 5, 6, 3, 0.1), p = random_labels(rng, 5, 6, 3, 0.2);
      accumulate(expected, g, p);
      write_label_png({"x", g}, dir / ("gt/im" + std::to_string(i) + ".png"));
      write_label_png({"x", p}, dir / ("pred/im" + std::to_string(i) + ".png"));
    }
    CHECK(evaluate_dirs(dir / "gt", dir / "pred", 3) == expected);
    std::filesystem::remove(dir / "pred/im2.png");
    CHECK_THROWS_AS(evaluate_dirs(dir / "gt", dir / "pred", 3), IoError);
  }
}
