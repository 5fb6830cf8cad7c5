#include <sstream>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "geoloc/curation.hpp"
#include "geoloc/error.hpp"
#include "geoloc/io.hpp"

using namespace geoloc;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Small world written to disk: train/test metadata and embeddings.
struct WorldFiles {
  fixture::TempDir dir{"cli"};
  fixture::World world;

  WorldFiles() {
    fixture::WorldSpec spec;
    spec.train = 240;
    spec.test = 60;
    world = fixture::make_world(spec, 17);
    write_file(dir / "train.csv", metadata_to_csv(world.train_meta));
    write_file(dir / "test.csv", metadata_to_csv(world.test_meta));
    write_embeddings(dir / "train.emb", world.train_emb);
    write_embeddings(dir / "test.emb", world.test_emb);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::string train_config(const std::string& extra = "") {
  return R"({"partition": {"max_depth": 6, "max_leaf": 40},
    "train": {"head": "hybrid", "epochs": 2, "batch_size": 32, "seed": 3, "learning_rate": 0.001,
              "optimizer": "adam")" + extra + "}}";
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("partition of four quadrant points") {
    fixture::TempDir dir("part");
    write_file(dir / "m.csv", "id,latitude,longitude\n1,45,90\n2,45,-90\n3,-45,90\n4,-45,-90\n");
    const auto args = std::vector<std::string>{"partition", "--meta", (dir / "m.csv").string(), "--out",
                                               (dir / "p.json").string(), "--max-depth", "3", "--max-leaf", "1"};
    const Run r = run_cli(args);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("K=4") != std::string::npos);
    const std::string first = read_file(dir / "p.json");
    CHECK(partition_from_json(first).tree.num_leaves() == 4);
    REQUIRE(run_cli(args).code == 0);
    CHECK(read_file(dir / "p.json") == first);
  }

  TEST_CASE("errors and usage") {
    const Run missing = run_cli({"partition", "--meta", "/nonexistent.csv", "--out", "/tmp/x.json"});
    CHECK(missing.code == 1);
    CHECK(missing.err.rfind("ERROR: ", 0) == 0);
    CHECK(run_cli({"frobnicate"}).code == 2);
    CHECK(run_cli({"partition"}).code == 2);
    CHECK(run_cli({"--help"}).code == 0);
  }

  TEST_CASE("train is deterministic and writes a trace") {
    WorldFiles w;
    write_file(w.dir / "cfg.json", train_config());
    const auto args = [&](const std::string& out) {
      return std::vector<std::string>{"train", "--config", w.path("cfg.json"), "--emb", w.path("train.emb"), "--meta",
                                      w.path("train.csv"), "--out", w.path(out)};
    };
    const Run a = run_cli(args("a.bin"));
    REQUIRE_MESSAGE(a.code == 0, a.err);
    REQUIRE(run_cli(args("b.bin")).code == 0);
    CHECK(read_file(w.dir / "a.bin") == read_file(w.dir / "b.bin"));
    CHECK(read_file(w.dir / "a.bin.json") == read_file(w.dir / "b.bin.json"));
    CHECK(a.out.find("final_loss") != std::string::npos);
    const std::string trace = read_file(w.dir / "a.bin.trace.csv");
    // Header plus (ce, relative_l2, total) for two epochs.
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 1 + 2 * 3);

    const Run other_seed = run_cli([&] {
      auto v = args("c.bin");
      v.insert(v.end(), {"--seed", "9"});
      return v;
    }());
    REQUIRE(other_seed.code == 0);
    CHECK(read_file(w.dir / "c.bin") != read_file(w.dir / "a.bin"));

    // Evaluate the checkpoint against a partition with a different K.
    REQUIRE(run_cli({"partition", "--meta", w.path("train.csv"), "--out", w.path("p6.json"), "--max-depth", "6",
                     "--max-leaf", "40"})
                .code == 0);
    REQUIRE(run_cli({"partition", "--meta", w.path("train.csv"), "--out", w.path("p2.json"), "--max-depth", "2",
                     "--max-leaf", "1000"})
                .code == 0);
    const auto eval_args = [&](const std::string& part) {
      return std::vector<std::string>{"eval", "--model", w.path("a.bin"), "--emb", w.path("test.emb"), "--meta",
                                      w.path("test.csv"), "--partition", w.path(part), "--out", w.path("r.json"),
                                      "--per-sample", w.path("ps.csv"), "--curves", w.path("cv.csv")};
    };
    const Run ok = run_cli(eval_args("p6.json"));
    CHECK_MESSAGE(ok.code == 0, ok.err);
    const EvalReport rep = report_from_json(read_file(w.dir / "r.json"));
    CHECK(rep.n_samples == 60);
    CHECK(rep.accuracy.contains("country"));
    const std::string ps = read_file(w.dir / "ps.csv");
    CHECK(std::count(ps.begin(), ps.end(), '\n') == 61);
    const Run mismatch = run_cli(eval_args("p2.json"));
    CHECK(mismatch.code == 1);
    CHECK(mismatch.err.find("K=") != std::string::npos);
  }

  TEST_CASE("contrastive run without the pairing column names the level") {
    WorldFiles w;
    Metadata bare = w.world.train_meta;
    bare.has_admin = {true, false, false, false};
    for (auto& r : bare.records) r.admin = {r.admin[0], "", "", ""};
    write_file(w.dir / "bare.csv", metadata_to_csv(bare));
    write_file(w.dir / "cfg.json", train_config(R"(, "contrastive": {"level": "region"})"));
    const Run r = run_cli({"train", "--config", w.path("cfg.json"), "--emb", w.path("train.emb"), "--meta",
                           w.path("bare.csv"), "--out", w.path("m.bin")});
    CHECK(r.code == 1);
    CHECK(r.err.find("missing label") != std::string::npos);
    CHECK(r.err.find("region") != std::string::npos);
  }

  TEST_CASE("eval of perfect predictions") {
    WorldFiles w;
    std::string preds = "id,latitude,longitude\n";
    for (const auto& r : w.world.test_meta.records) {
      preds += std::to_string(r.id) + "," + format_double(r.location.lat()) + "," + format_double(r.location.lon()) + "\n";
    }
    write_file(w.dir / "preds.csv", preds);
    REQUIRE(run_cli({"partition", "--meta", w.path("train.csv"), "--out", w.path("p.json")}).code == 0);
    const Run r = run_cli({"eval", "--predictions", w.path("preds.csv"), "--meta", w.path("test.csv"), "--partition",
                           w.path("p.json"), "--out", w.path("r.json")});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const EvalReport rep = report_from_json(read_file(w.dir / "r.json"));
    CHECK(rep.geoscore == 5000.0);
    CHECK(rep.mean_distance_km == 0.0);
    const Run table = run_cli({"report", w.path("r.json")});
    CHECK(table.code == 0);
    CHECK(table.out.find("5000") != std::string::npos);
  }

  TEST_CASE("baseline and retrieval") {
    WorldFiles w;
    REQUIRE(run_cli({"baseline", "--train-meta", w.path("train.csv"), "--test-meta", w.path("test.csv"), "--out",
                     w.path("base.csv")})
                .code == 0);
    CHECK(cli::read_predictions(w.dir / "base.csv").size() == 60);
    const Run r = run_cli({"retrieve", "--train-emb", w.path("train.emb"), "--train-meta", w.path("train.csv"), "--test",
                           w.path("train.emb"), "--out", w.path("self.csv")});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto preds = cli::read_predictions(w.dir / "self.csv");
    REQUIRE(preds.size() == 240);
    const std::string text = read_file(w.dir / "self.csv");
    for (std::size_t i = 0; i < preds.size(); ++i) {
      CHECK(preds[i].location == w.world.train_meta.records[i].location);
    }
    CHECK(text.find("matched_id") != std::string::npos);
    REQUIRE(run_cli({"export-csv", "--emb", w.path("test.emb"), "--out", w.path("e.csv")}).code == 0);
    CHECK(read_file(w.dir / "e.csv").rfind("id,e0,", 0) == 0);
  }

  TEST_CASE("curate deduplicates and enforces separation") {
    fixture::TempDir dir("curate");
    std::string csv = "id,latitude,longitude,split\n";
    for (int i = 1; i <= 7; ++i) {
      const double c = i == 1 ? 0.0003 : 5.0 * i;
      csv += std::to_string(i) + "," + format_double(c) + "," + format_double(c) + ",train\n";
    }
    csv += "8,0.00034,0.0003,train\n";   // about 4 m from id 1
    csv += "9,10.0045,10,test\n";        // 0.5 km from id 2
    csv += "10,-40,-40,test\n";
    write_file(dir / "raw.csv", csv);
    const Run r = run_cli({"curate", "--meta", (dir / "raw.csv").string(), "--out", (dir / "out").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const Metadata train = read_metadata_csv(dir / "out" / "train.csv");
    const Metadata test = read_metadata_csv(dir / "out" / "test.csv");
    CHECK(train.records.size() == 7);
    REQUIRE(test.records.size() == 1);
    CHECK(test.records[0].id == 10);
    const std::string summary = read_file(dir / "out" / "summary.json");
    CHECK(summary.find("\"after_dedup\": 9") != std::string::npos);
    CHECK(summary.find("\"test_candidates\": 2") != std::string::npos);

    // With images: one unreadable, one rejected, the rest kept.
    fixture::TempDir imgs("curate-img");
    Rng rng(3);
    for (int id = 1; id <= 10; ++id) {
      std::vector<std::uint8_t> rgb(3 * 16 * 16);
      for (auto& v : rgb) v = static_cast<std::uint8_t>(rng.index(256));
      if (id == 3) std::fill(rgb.begin(), rgb.end(), 0);
      if (id != 4) write_ppm(imgs / (std::to_string(id) + ".ppm"), RasterImage(16, 16, rgb));
    }
    const Run f = run_cli({"curate", "--meta", (dir / "raw.csv").string(), "--out", (dir / "out2").string(),
                           "--images", imgs.path().string(), "--min-blur-db", "40"});
    REQUIRE_MESSAGE(f.code == 0, f.err);
    CHECK(read_metadata_csv(dir / "out2" / "train.csv").records.size() == 5);
    const std::string report = read_file(dir / "out2" / "filter_report.csv");
    CHECK(report.find("\n3,") != std::string::npos);
    CHECK(report.find("unreadable") != std::string::npos);
  }
}
