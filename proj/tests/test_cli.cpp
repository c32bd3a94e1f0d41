#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "pidcount/checkpoint.hpp"
#include "pidcount/cli.hpp"
#include "pidcount/data.hpp"
#include "pidcount/metrics.hpp"
#include "pidcount/model.hpp"
#include "pidcount/postproc.hpp"

using namespace pidcount;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pidcount");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// Relative path -> bytes for every file under `root`.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

struct Workspace {
  fs::path root = fs::temp_directory_path() / "pidcount_test_cli";
  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string operator/(const std::string& rel) const { return (root / rel).string(); }
};

}  // namespace

TEST_CASE("synth is byte-reproducible") {
  Workspace ws;
  for (const char* out : {"a", "b"}) {
    const auto r = cli({"synth", "--n", "64", "--size", "32", "--counts", "3:12", "--seed", "1", "--out", ws / out});
    REQUIRE(r.code == kExitOk);
  }
  const auto a = tree(ws / "a"), b = tree(ws / "b");
  CHECK(a.size() == 64 * 2 + 4);
  // config.txt records the output directory, everything else must match
  for (const auto& [name, bytes] : a) {
    if (name == "config.txt") continue;
    REQUIRE(b.count(name));
    CHECK(b.at(name) == bytes);
  }
  CHECK(load_dataset(ws / "a/train").size() == 38);
  CHECK(cli({"synth", "--n", "10", "--flat", "--out", ws / "flat"}).code == kExitOk);
  CHECK(load_dataset(ws / "flat").size() == 10);
}

TEST_CASE("train, eval, count, baseline and report") {
  Workspace ws;
  REQUIRE(cli({"synth", "--n", "20", "--size", "16", "--counts", "1:3", "--out", ws / "ds"}).code == kExitOk);
  const auto t = cli({"train", "--data", ws / "ds", "--variant", "pid", "--width", "4", "--epochs", "2", "--batch",
                      "4", "--augment", "none", "--out", ws / "run1"});
  REQUIRE_MESSAGE(t.code == kExitOk, t.err);
  for (const char* f : {"best.ckpt", "curves.csv", "config.txt"}) CHECK(fs::exists(ws.root / "run1" / f));

  SUBCASE("the resolved config alone reproduces the run") {
    const auto again = cli({"train", "--config", ws / "run1/config.txt", "--out", ws / "run2"});
    REQUIRE(again.code == kExitOk);
    CHECK(slurp(ws / "run1/curves.csv") == slurp(ws / "run2/curves.csv"));
    CHECK(slurp(ws / "run1/best.ckpt") == slurp(ws / "run2/best.ckpt"));
  }

  SUBCASE("eval agrees with the metrics module and is bit-stable") {
    const auto e1 = cli({"eval", "--ckpt", ws / "run1/best.ckpt", "--data", ws / "ds/test", "--out", ws / "e1"});
    REQUIRE_MESSAGE(e1.code == kExitOk, e1.err);
    const auto e2 = cli({"eval", "--ckpt", ws / "run1/best.ckpt", "--data", ws / "ds/test", "--out", ws / "e2",
                         "--threads", "3"});
    REQUIRE(e2.code == kExitOk);
    CHECK(slurp(ws / "e1/metrics.csv") == slurp(ws / "e2/metrics.csv"));
    CHECK(slurp(ws / "e1/metrics.json") == slurp(ws / "e2/metrics.json"));

    std::ifstream js(ws / "e1/metrics.json");
    const auto j = nlohmann::json::parse(js);
    CHECK(j["method"] == "pidnet");

    const auto model = Model::from_checkpoint(load_checkpoint(ws / "run1/best.ckpt"));
    const auto samples = load_dataset(ws / "ds/test");
    std::vector<ImageMetrics> rows;
    for (const auto& s : samples) {
      const auto probs = model.forward(images_tensor({&s}));
      const auto counted = count_objects(probs, PostprocParams{}.scaled_for(16));
      rows.push_back(evaluate_image(s.id, "pidnet", binarize(probs)[0], s.mask, counted.count, s.true_count));
    }
    const auto want = aggregate("pidnet", rows);
    CHECK(j["accuracy"].get<double>() == want.mean.accuracy);
    CHECK(j["dice"].get<double>() == want.mean.dice);
    CHECK(j["jaccard"].get<double>() == want.mean.jaccard);
    CHECK(j["precision"].get<double>() == want.mean.precision);
    CHECK(j["counting_accuracy"].get<double>() == want.counting_accuracy);
    CHECK(j["hausdorff_px"].get<double>() == want.hausdorff_px);
  }

  SUBCASE("count prints one line per image") {
    const auto c = cli({"count", "--ckpt", ws / "run1/best.ckpt", "--data", ws / "ds/test"});
    REQUIRE(c.code == kExitOk);
    CHECK(std::count(c.out.begin(), c.out.end(), '\n') == 4);
    CHECK(c.out.rfind("blob_", 0) == 0);
  }

  SUBCASE("baselines share the metrics outputs") {
    for (const char* m : {"otsu", "watershed", "hough"}) {
      const auto b = cli({"baseline", "--method", m, "--data", ws / "ds/test", "--out", ws / (std::string("b_") + m)});
      REQUIRE_MESSAGE(b.code == kExitOk, b.err);
      CHECK(slurp(ws / (std::string("b_") + m + "/metrics.csv")).find(std::string(",") + m + ",") != std::string::npos);
    }
  }

  SUBCASE("report") {
    const auto r = cli({"report", "--run", ws / "run1", "--ckpt", ws / "run1/best.ckpt", "--data", ws / "ds/test",
                        "--out", ws / "rep"});
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
    CHECK(fs::exists(ws.root / "rep/loss.png"));
    CHECK(fs::exists(ws.root / "rep/iou.png"));
    CHECK(std::distance(fs::directory_iterator(ws.root / "rep/overlays"), fs::directory_iterator{}) == 4);
  }
}

TEST_CASE("flat datasets are split and the test subset is kept") {
  Workspace ws;
  REQUIRE(cli({"synth", "--n", "10", "--size", "16", "--flat", "--out", ws / "flat"}).code == kExitOk);
  const auto t = cli({"train", "--data", ws / "flat", "--width", "4", "--epochs", "1", "--out", ws / "run"});
  REQUIRE_MESSAGE(t.code == kExitOk, t.err);
  CHECK(load_dataset(ws / "run/test").size() == 2);
  CHECK(fs::exists(ws.root / "run/split.csv"));
}

TEST_CASE("exit codes") {
  Workspace ws;
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"bogus"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({"train", "--set", "lr=banana", "--data", ws / "x", "--out", ws / "y"}).code == kExitUsage);
  CHECK(cli({"train", "--set", "no_such_key=1"}).code == kExitUsage);
  CHECK(cli({"train", "--data", ws / "missing", "--out", ws / "y"}).code == kExitData);
  CHECK(cli({"eval", "--data", ws / "missing", "--out", ws / "y"}).code == kExitUsage);  // no checkpoint given

  REQUIRE(cli({"synth", "--n", "10", "--size", "16", "--out", ws / "ds"}).code == kExitOk);
  const auto blowup = cli({"train", "--data", ws / "ds", "--width", "4", "--epochs", "3", "--lr", "1e30", "--out",
                           ws / "run"});
  CHECK(blowup.code == kExitNumerical);
  CHECK(blowup.err.find("non-finite loss") != std::string::npos);
}
