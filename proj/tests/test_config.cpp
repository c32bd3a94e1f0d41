#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pidcount/config.hpp"
#include "pidcount/errors.hpp"

using namespace pidcount;

TEST_CASE("defaults") {
  const auto c = parse_config_text("");
  CHECK(c.hyper.lr == 0.001f);
  CHECK(c.hyper.batch_size == 8);
  CHECK(c.hyper.epochs == 100);
  CHECK(c.split == std::array<int, 3>{3, 1, 1});
  CHECK(c.model.variant == Variant::PID);
  CHECK(c.postproc_for(256).min_area == 9);
  CHECK(c.postproc_for(32).min_area == 0);
}

TEST_CASE("parsing") {
  const auto c = parse_config_text("# run\nlr = 0.001\n\nvariant = m2   # trailing comment\nsplit = 4:1:1\nmin_area = 5\n");
  CHECK(c.hyper.lr == 0.001f);
  CHECK(c.model.variant == Variant::M2);
  CHECK(c.split == std::array<int, 3>{4, 1, 1});
  CHECK(c.postproc_for(32).min_area == 5);
  CHECK(parse_config_text("counts = 2:7").synth.max_count == 7);
}

TEST_CASE("errors cite the line") {
  auto message = [](const std::string& text) {
    try {
      parse_config_text(text);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("lr = banana").find("line 1") != std::string::npos);
  CHECK(message("epochs = 3\nlearning_rate = 0.1").find("line 2") != std::string::npos);
  CHECK(message("epochs = 3\n\njust words").find("line 3") != std::string::npos);
  CHECK(message("batch_size = 0").find("line 1") != std::string::npos);
  CHECK_THROWS_AS(parse_config_text("augment_policy = all"), ParseError);
}

TEST_CASE("overrides win over the file and the resolved file reproduces the run") {
  const auto dir = std::filesystem::temp_directory_path() / "pidcount_test_config";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "run.cfg") << "epochs = 5\nwidth = 8\n";
  const auto c = parse_config(dir / "run.cfg", {{"epochs", "7"}, {"seed", "99"}});
  CHECK(c.hyper.epochs == 7);
  CHECK(c.model.base_width == 8);
  CHECK(c.seed == 99);
  CHECK_THROWS_AS(parse_config(dir / "run.cfg", {{"nope", "1"}}), ConfigError);
  CHECK_THROWS_AS(parse_config(dir / "missing.cfg"), LoadError);

  write_resolved_config(dir / "resolved.cfg", c);
  const auto again = parse_config(dir / "resolved.cfg");
  CHECK(format_config(again) == format_config(c));
  std::filesystem::remove_all(dir);
}

TEST_CASE("every key round trips through format_config") {
  const auto text = format_config(RunConfig{});
  for (const auto& key : config_keys()) CHECK(text.find(key + " = ") != std::string::npos);
  CHECK(format_config(parse_config_text(text)) == text);
}
