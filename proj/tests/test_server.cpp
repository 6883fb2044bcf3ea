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

#include <httplib.h>

#include <atomic>
#include <thread>

#include <nlohmann/json.hpp>

#include "comrp/feature_io.hpp"
#include "comrp/labeling.hpp"
#include "comrp/metrics.hpp"
#include "comrp/png_io.hpp"
#include "comrp/server.hpp"
#include "comrp/synth.hpp"
#include "test_util.hpp"

using namespace comrp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// A small synthetic dataset with a k=8 clustering written to disk.
struct Dataset {
  comrp::testing::TempDir dir;
  SynthDataset ds;
  ClusterModel model;

  Dataset() {
    SynthConfig cfg;
    cfg.seed = 13;
    cfg.n_images = 4;
    cfg.image_size = 96;
    ds = generate(cfg);
    write_dataset(ds, dir.path());
    ClusterConfig cc;
    cc.method = ClusterMethod::kmeans;
    cc.k = 8;
    cc.seed = 1;
    model = cluster(baseline_pack(crop_regions(ds.images, ds.pixels, flatten(ds.masks), 224)), cc);
    write_model(dir / "model.json", model);
  }

  ServerInputs inputs(bool with_gt) const {
    return load_server_inputs(dir / "model.json", dir / "masks", dir / "manifest.json", dir / "merge.json",
                              with_gt ? std::optional<fs::path>(dir / "gt") : std::nullopt);
  }

  /// Maps every cluster whose regions are mostly `cls` to it, the rest to DISCARD.
  MergeMap only_class(std::uint8_t cls) const {
    MergeMap m = majority_merge_map(model, ds.region_classes, ds.class_names);
    for (auto& [c, a] : m.mapping)
      if (a != ClassAssignment{cls}) a = std::nullopt;
    return m;
  }
};

struct Running {
  ReviewServer server;
  int port = 0;
  std::thread thread;

  explicit Running(ServerInputs in) : server(std::move(in)) {
    port = server.bind("127.0.0.1", 0);
    thread = std::thread([this] { server.listen(); });
  }
  ~Running() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
};

httplib::Result put_merge(httplib::Client& c, const MergeMap& m, std::optional<std::string> expected) {
  httplib::Headers h;
  if (expected) h.emplace("X-Expected-Revision", *expected);
  return c.Put("/api/mergemap", h, json{{"merge_map", to_json(m)}}.dump(), "application/json");
}

RgbImage decode_rgb(const std::string& bytes, const fs::path& scratch) {
  std::ofstream(scratch, std::ios::binary) << bytes;
  return read_png_rgb(scratch);
}

}  // namespace

TEST_SUITE("server") {
  TEST_CASE("cluster listing and merge map start all-DISCARD") {
    Dataset d;
    Running srv(d.inputs(false));
    auto c = srv.client();
    auto res = c.Get("/api/clusters");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("X-Revision") == "0");
    const json cards = json::parse(res->body);
    REQUIRE(cards.size() == d.model.k);
    std::size_t total = 0;
    for (std::size_t i = 0; i < cards.size(); ++i) {
      CHECK(cards[i]["cluster_id"] == i);
      CHECK(cards[i]["mapping"] == "DISCARD");
      CHECK(cards[i]["exemplars"].size() >= 1);
      total += cards[i]["size"].get<std::size_t>();
    }
    CHECK(total == d.model.assignments.size());

    res = c.Get("/api/mergemap");
    REQUIRE(res);
    const json mm = json::parse(res->body);
    CHECK(mm["revision"] == 0);
    CHECK(mm["merge_map"]["mapping"].size() == d.model.k);
  }

  TEST_CASE("region crops are bounded, deterministic and match crop_region") {
    Dataset d;
    Running srv(d.inputs(false));
    auto c = srv.client();
    const auto& mask = d.ds.masks[1].masks[2];
    const std::string url = "/api/regions/" + mask.mask_id + "/crop.png";
    auto a = c.Get(url);
    auto b = c.Get(url);
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->status == 200);
    CHECK(a->get_header_value("Content-Type") == "image/png");
    CHECK(a->body == b->body);
    const RgbImage crop = decode_rgb(a->body, d.dir / "crop.png");
    CHECK(crop.width <= 256);
    CHECK(crop.height <= 256);
    CHECK(crop == crop_region(d.ds.pixels[1], mask));

    auto missing = c.Get("/api/regions/nope/crop.png");
    REQUIRE(missing);
    CHECK(missing->status == 404);
  }

  TEST_CASE("merge map writes use optimistic concurrency") {
    Dataset d;
    Running srv(d.inputs(false));
    auto c = srv.client();
    MergeMap road = d.only_class(0);

    auto res = put_merge(c, road, std::nullopt);
    REQUIRE(res);
    CHECK(res->status == 428);
    res = put_merge(c, road, "abc");
    CHECK(res->status == 400);
    res = put_merge(c, road, "5");
    CHECK(res->status == 409);

    MergeMap partial = road;
    partial.mapping.erase(3);
    res = put_merge(c, partial, "0");
    REQUIRE(res);
    CHECK(res->status == 422);
    CHECK(json::parse(res->body)["missing"] == json::array({3}));

    MergeMap bad_class = road;
    bad_class.mapping[0] = static_cast<std::uint8_t>(road.classes.size() - 1);
    bad_class.mapping[1] = std::nullopt;
    bad_class.classes.pop_back();
    res = put_merge(c, bad_class, "0");
    CHECK(res->status == 422);
    CHECK(srv.server.revision() == 0);
    CHECK_FALSE(fs::exists(d.dir / "merge.json"));

    res = put_merge(c, road, "0");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["revision"] == 1);
    CHECK(res->get_header_value("X-Revision") == "1");
    CHECK(read_merge_map(d.dir / "merge.json") == road);
    CHECK(srv.server.merge_map() == road);

    res = put_merge(c, road, "0");
    CHECK(res->status == 409);
    CHECK(json::parse(res->body)["revision"] == 1);

    auto cards = json::parse(c.Get("/api/clusters")->body);
    for (const auto& card : cards) {
      const auto a = road.mapping.at(card["cluster_id"].get<std::uint32_t>());
      CHECK(card["mapping"] == (a ? json(*a) : json("DISCARD")));
    }
  }

  TEST_CASE("a restarted server loads the saved merge map") {
    Dataset d;
    write_merge_map_atomic(d.dir / "merge.json", d.only_class(0));
    Running srv(d.inputs(false));
    CHECK(srv.server.merge_map() == d.only_class(0));
  }

  TEST_CASE("previews tint exactly the mapped regions") {
    Dataset d;
    Running srv(d.inputs(false));
    auto c = srv.client();
    const auto& image = d.ds.images[0];
    const RgbImage plain = d.ds.pixels[0];

    auto res = c.Get("/api/images/" + image.image_id + "/preview");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(decode_rgb(res->body, d.dir / "p0.png") == plain);

    const MergeMap road = d.only_class(0);
    REQUIRE(put_merge(c, road, "0")->status == 200);
    res = c.Get("/api/images/" + image.image_id + "/preview");
    REQUIRE(res);
    CHECK(res->get_header_value("X-Revision") == "1");
    const RgbImage tinted = decode_rgb(res->body, d.dir / "p1.png");

    // Oracle: union of the decoded masks whose cluster maps to road.
    GrayImage expected(image.width, image.height, kIgnoreLabel);
    std::size_t union_px = 0;
    for (const auto& m : d.ds.masks[0].masks) {
      if (road.mapping.at(d.model.assignments.at(m.mask_id)) != ClassAssignment{0}) continue;
      const Bitmask b = rle_decode(m.rle, image.width, image.height);
      for (std::size_t p = 0; p < b.pixels.size(); ++p)
        if (b.pixels[p]) expected.pixels[p] = 0;
    }
    std::size_t changed = 0;
    for (std::size_t p = 0; p < expected.pixels.size(); ++p) {
      union_px += expected.pixels[p] == 0;
      const bool diff = tinted.pixels[3 * p] != plain.pixels[3 * p] || tinted.pixels[3 * p + 1] != plain.pixels[3 * p + 1] ||
                        tinted.pixels[3 * p + 2] != plain.pixels[3 * p + 2];
      changed += diff;
      REQUIRE(diff == (expected.pixels[p] == 0));
    }
    CHECK(union_px > 0);
    CHECK(changed == union_px);
    CHECK(tinted == blend_preview(plain, expected));

    res = c.Get("/api/images/nope/preview");
    CHECK(res->status == 404);
  }

  TEST_CASE("blend_preview arithmetic") {
    GrayImage labels(2, 1, kIgnoreLabel);
    labels.at(1, 0) = 0;
    const RgbImage img(2, 1, {100, 0, 255});
    const RgbImage out = blend_preview(img, labels);
    const Rgb t = class_color(0);
    CHECK(out.at(0, 0)[0] == 100);
    for (int k = 0; k < 3; ++k) CHECK(out.at(1, 0)[k] == (img.at(1, 0)[k] + t[k] + 1) / 2);
    CHECK(class_color(0) != class_color(1));
  }

  TEST_CASE("metrics endpoint") {
    Dataset d;
    {
      Running bare(d.inputs(false));
      auto c = bare.client();
      auto res = c.Get("/api/metrics");
      REQUIRE(res);
      CHECK(res->status == 404);
    }
    Running srv(d.inputs(true));
    auto c = srv.client();
    // No classes yet: ground truth labels are out of range.
    CHECK(c.Get("/api/metrics")->status == 422);

    const MergeMap merge = majority_merge_map(d.model, d.ds.region_classes, d.ds.class_names);
    REQUIRE(put_merge(c, merge, "0")->status == 200);
    auto res = c.Get("/api/metrics");
    REQUIRE(res);
    CHECK(res->status == 200);

    rasterize_dataset(d.ds.images, flatten(d.ds.masks), apply_merge(d.model, merge), d.dir / "pred");
    const auto conf = evaluate_dirs(d.dir / "gt", d.dir / "pred", 5);
    CHECK(res->body == to_json(report(conf, merge.classes)).dump());
    CHECK(c.Get("/api/metrics")->body == res->body);
  }

  TEST_CASE("concurrent readers see consistent snapshots during writes") {
    Dataset d;
    Running srv(d.inputs(false));
    std::atomic<bool> done{false};
    std::atomic<int> bad{0}, reads{0};
    std::vector<std::thread> readers;
    for (int t = 0; t < 4; ++t) {
      readers.emplace_back([&] {
        auto c = srv.client();
        while (!done) {
          auto res = c.Get("/api/mergemap");
          if (!res || res->status != 200) {
            ++bad;
            continue;
          }
          const json body = json::parse(res->body);
          const auto rev = body["revision"].get<std::uint64_t>();
          if (std::to_string(rev) != res->get_header_value("X-Revision")) ++bad;
          // Odd revisions map everything to road, even ones discard everything.
          const auto& mapping = body["merge_map"]["mapping"];
          for (const auto& [k, v] : mapping.items()) {
            if (rev > 0 && (rev % 2 == 1) != (v == 0)) ++bad;
          }
          ++reads;
        }
      });
    }
    auto c = srv.client();
    MergeMap all_road = d.only_class(0), none = d.only_class(0);
    for (auto& [k, v] : all_road.mapping) v = 0;
    for (auto& [k, v] : none.mapping) v = std::nullopt;
    for (int rev = 0; rev < 20; ++rev) {
      auto res = put_merge(c, rev % 2 == 0 ? all_road : none, std::to_string(rev));
      REQUIRE(res);
      REQUIRE(res->status == 200);
    }
    done = true;
    for (auto& t : readers) t.join();
    CHECK(bad == 0);
    CHECK(reads > 0);
    CHECK(srv.server.revision() == 20);
  }
}
