#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "oracle_helpers.hpp"
#include "uscliplab/corpus.hpp"
#include "uscliplab/synthetic.hpp"

using namespace usclip;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  std::filesystem::path dir = std::filesystem::temp_directory_path() / ("uscliplab_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

SampleRecord embedded_record(const std::string& id, const std::string& source, Organ organ,
                             double fill) {
  SampleRecord rec;
  rec.sample_id = id;
  rec.source_dataset = source;
  rec.organ = organ;
  rec.embedded_image = Image(64, 64, fill);
  return rec;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

// -------------------- label schemas --------------------

TEST_CASE("canonical condition vocabularies") {
  CHECK(canonical_conditions(Organ::lung) == std::vector<std::string>{"healthy", "covid", "other"});
  CHECK(canonical_conditions(Organ::breast) ==
        std::vector<std::string>{"normal", "benign", "malignant"});
  CHECK(canonical_conditions(Organ::thyroid) ==
        std::vector<std::string>{"normal", "benign", "malignant"});
}

TEST_CASE("map_labels resolves canonical and case-variant labels") {
  LabelSchema thyroid = default_schema("t", Organ::thyroid);
  CHECK(map_labels("malignant", thyroid) == "malignant");
  LabelSchema lung = default_schema("l", Organ::lung);
  CHECK(map_labels("Covid", lung) == "covid");
  CHECK(map_labels("COVID", lung) == "covid");

  LabelSchema breast = default_schema("b", Organ::breast);
  try {
    map_labels("cystic?", breast);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("cystic?") != std::string::npos);
    CHECK(msg.find("'benign'") != std::string::npos);  // lists the valid keys
    CHECK(msg.find("'malignant'") != std::string::npos);
  }

  LabelSchema bad = breast;
  bad.condition_mapping["odd"] = "weird";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

// -------------------- manifest + registry --------------------

TEST_CASE("manifest round trip and registry construction") {
  auto dir = scratch_dir("manifest");

  // two internal blocks, one held-out external block
  std::vector<ManifestDataset> blocks(3);
  blocks[0].name = "alpha";
  blocks[0].organ = Organ::breast;
  for (int i = 0; i < 3; ++i) {
    ManifestRecord r;
    r.sample_id = "a" + std::to_string(i);
    r.image_path = "img/a" + std::to_string(i) + ".png";
    r.raw_label = "benign";
    r.metadata["Age"] = "40";
    blocks[0].records.push_back(r);
  }
  blocks[1].name = "beta";
  blocks[1].organ = Organ::lung;
  for (int i = 0; i < 2; ++i) {
    ManifestRecord r;
    r.sample_id = "b" + std::to_string(i);
    r.image_path = "img/b" + std::to_string(i) + ".png";
    r.raw_label = "Covid";
    r.caption = "expert note " + std::to_string(i);
    blocks[1].records.push_back(r);
  }
  blocks[2].name = "gamma";
  blocks[2].organ = Organ::liver;
  blocks[2].held_out = true;
  {
    ManifestRecord r;
    r.sample_id = "g0";
    r.image_path = "img/g0.png";
    blocks[2].records.push_back(r);
  }

  auto path = dir / "manifest.json";
  save_manifest(path, blocks);
  auto loaded = load_manifest(path);
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[2].held_out);
  CHECK(loaded[0].records[0].metadata.at("Age") == "40");

  DatasetRegistry reg = DatasetRegistry::from_manifest(path);
  REQUIRE(reg.records().size() == 6);
  CHECK(reg.datasets().size() == 3);

  std::map<std::string, const SampleRecord*> by_id;
  for (const auto& r : reg.records()) by_id[r.sample_id] = &r;
  CHECK(by_id.at("a0")->condition == "benign");
  CHECK(by_id.at("b0")->condition == "covid");
  CHECK(by_id.at("b0")->caption == "expert note 0");
  CHECK(by_id.at("b0")->caption_source == CaptionSource::expert);
  CHECK(by_id.at("g0")->held_out);
  REQUIRE(by_id.at("g0")->split.has_value());
  CHECK(*by_id.at("g0")->split == Split::external);
  // relative image paths resolve against the manifest directory
  CHECK(by_id.at("a0")->image_path == (dir / "img/a0.png").lexically_normal().string());
}

TEST_CASE("manifest error cases") {
  auto dir = scratch_dir("manifest_err");

  {
    std::ofstream f(dir / "empty.json");
    f << "[]\n";
  }
  CHECK_THROWS_WITH_AS(DatasetRegistry::from_manifest(dir / "empty.json"),
                       "manifest contains no records", ConfigError);

  std::vector<ManifestDataset> dup(2);
  dup[0].name = "x";
  dup[0].organ = Organ::breast;
  dup[1].name = "y";
  dup[1].organ = Organ::breast;
  ManifestRecord r;
  r.sample_id = "same";
  r.image_path = "p.png";
  dup[0].records.push_back(r);
  dup[1].records.push_back(r);
  save_manifest(dir / "dup.json", dup);
  try {
    DatasetRegistry::from_manifest(dir / "dup.json");
    FAIL("expected duplicate-id error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("'same'") != std::string::npos);
  }

  DatasetRegistry reg;
  ManifestDataset block;
  block.name = "x";
  block.organ = Organ::breast;
  block.records.push_back(r);
  reg.register_dataset(block, default_schema("x", Organ::breast));
  CHECK_THROWS_AS(reg.register_dataset(block, default_schema("x", Organ::breast)), ConfigError);

  CHECK_THROWS_AS(DatasetRegistry::from_manifest(dir / "missing.json"), ConfigError);
}

TEST_CASE("registry save/load round trip") {
  auto dir = scratch_dir("registry");
  std::vector<SampleRecord> records;
  SampleRecord a;
  a.sample_id = "r0";
  a.source_dataset = "src";
  a.organ = Organ::thyroid;
  a.image_path = (dir / "r0.png").string();
  a.condition = "benign";
  a.caption = "a caption";
  a.caption_source = CaptionSource::template_based;
  a.split = Split::train;
  a.metadata["Age"] = "33";
  records.push_back(a);
  SampleRecord b = a;
  b.sample_id = "r1";
  b.image_path = (dir / "r1.png").string();
  b.condition.reset();
  b.caption.reset();
  b.split.reset();
  b.held_out = false;
  records.push_back(b);

  auto path = dir / "registry.json";
  save_registry(path, records);
  auto loaded = load_registry(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].sample_id == "r0");
  CHECK(loaded[0].condition == "benign");
  CHECK(loaded[0].caption == "a caption");
  CHECK(loaded[0].split == Split::train);
  CHECK(loaded[0].metadata.at("Age") == "33");
  CHECK_FALSE(loaded[1].condition.has_value());
  CHECK_FALSE(loaded[1].split.has_value());

  // embedded-only records cannot be persisted
  SampleRecord em = embedded_record("e0", "src", Organ::breast, 0.5);
  CHECK_THROWS(save_registry(dir / "bad.json", {em}));

  // byte-stable re-save
  save_registry(dir / "registry2.json", loaded);
  CHECK(slurp(path) == slurp(dir / "registry2.json"));
}

// -------------------- preprocessing ops --------------------

TEST_CASE("deduplicate keeps the first record per image content") {
  std::vector<SampleRecord> recs;
  recs.push_back(embedded_record("dup_a", "s", Organ::breast, 0.3));
  recs.push_back(embedded_record("dup_b", "s", Organ::breast, 0.3));  // same bytes
  auto out = deduplicate(recs);
  REQUIRE(out.size() == 1);
  CHECK(out[0].sample_id == "dup_a");

  // 5 copies of one image plus 3 distinct -> 4 survivors
  recs.clear();
  for (int i = 0; i < 5; ++i)
    recs.push_back(embedded_record("c" + std::to_string(i), "s", Organ::breast, 0.7));
  for (int i = 0; i < 3; ++i)
    recs.push_back(embedded_record("d" + std::to_string(i), "s", Organ::breast, 0.1 * (i + 1)));
  out = deduplicate(recs);
  CHECK(out.size() == 4);

  // all distinct -> identity, order preserved
  std::vector<SampleRecord> distinct;
  for (int i = 0; i < 4; ++i)
    distinct.push_back(embedded_record("u" + std::to_string(i), "s", Organ::breast, 0.2 * (i + 1)));
  out = deduplicate(distinct);
  REQUIRE(out.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(out[i].sample_id == distinct[i].sample_id);
}

TEST_CASE("blank frame filter: drop iff mean below threshold") {
  Image zero(256, 256, 0.0);
  CHECK_FALSE(filter_blank_frames(zero, 0.04));  // drop
  Image half(256, 256, 0.5);
  CHECK(filter_blank_frames(half, 0.04));
  // exact boundary: 0.25 is a power of two, so the pixel mean is exact
  Image boundary(16, 16, 0.25);
  CHECK(filter_blank_frames(boundary, 0.25));  // mean == threshold is kept

  std::vector<SampleRecord> recs;
  recs.push_back(embedded_record("k", "s", Organ::breast, 0.5));
  recs.push_back(embedded_record("drop", "s", Organ::breast, 0.0));
  auto out = drop_blank_frames(recs, 0.04);
  REQUIRE(out.size() == 1);
  CHECK(out[0].sample_id == "k");
}

TEST_CASE("norm stats over the train pixel population") {
  auto train_record = [](const std::string& id, double fill) {
    SampleRecord rec = embedded_record(id, "s", Organ::breast, fill);
    rec.split = Split::train;
    return rec;
  };
  std::vector<SampleRecord> constant{train_record("c", 0.5)};
  NormStats s = compute_norm_stats(constant);
  CHECK(s.mean == doctest::Approx(0.5));
  CHECK(s.std == doctest::Approx(1e-6));  // zero-variance clamp

  std::vector<SampleRecord> two{train_record("z", 0.0), train_record("o", 1.0)};
  s = compute_norm_stats(two);
  CHECK(s.mean == doctest::Approx(0.5));
  CHECK(s.std == doctest::Approx(0.5));

  CHECK_THROWS_AS(compute_norm_stats({}), std::invalid_argument);
}

TEST_CASE("preprocess_image: resize to 256 then normalize") {
  NormStats stats{0.25, 0.5};
  Image big(512, 512, 0.75);
  Image out = preprocess_image(big, stats);
  CHECK(out.width == 256);
  CHECK(out.height == 256);
  CHECK(out.at(0, 0) == doctest::Approx(1.0));  // (0.75 - 0.25) / 0.5

  Image at_mean(256, 256, 0.25);
  out = preprocess_image(at_mean, stats);
  for (double v : out.pixels) CHECK(v == 0.0);  // exactly zero, no resampling blur

  Image odd(300, 100, 0.5);
  std::swap(odd.width, odd.height);  // 100 wide, 300 tall
  out = preprocess_image(odd, stats);
  CHECK(out.width == 256);
  CHECK(out.height == 256);

  CHECK_THROWS_AS(preprocess_image(Image(), stats), std::invalid_argument);
}

// -------------------- splits --------------------

TEST_CASE("largest remainder counts") {
  auto c = largest_remainder_counts(100, {0.7, 0.15, 0.15});
  CHECK(c == std::array<int, 3>{70, 15, 15});
  // remainder tie (30 * 0.15 = 4.5 twice) resolves toward the earlier split
  c = largest_remainder_counts(30, {0.7, 0.15, 0.15});
  CHECK(c == std::array<int, 3>{21, 5, 4});
  c = largest_remainder_counts(1, {0.7, 0.15, 0.15});
  CHECK(c[0] + c[1] + c[2] == 1);
}

TEST_CASE("stratified split: ratios, determinism, leakage") {
  std::vector<SampleRecord> records;
  for (int i = 0; i < 100; ++i) {
    auto r = embedded_record("n" + std::to_string(i), "one", Organ::breast, 0.5);
    records.push_back(r);
  }
  SplitAssignment sa = stratified_split(records, {0.7, 0.15, 0.15}, 11);
  int train = 0, val = 0, test = 0;
  for (const auto& [id, sp] : sa.by_sample) {
    if (sp == Split::train) ++train;
    else if (sp == Split::val) ++val;
    else ++test;
  }
  CHECK(train == 70);
  CHECK(val == 15);
  CHECK(test == 15);

  // determinism
  SplitAssignment sb = stratified_split(records, {0.7, 0.15, 0.15}, 11);
  CHECK(sa.by_sample == sb.by_sample);
  SplitAssignment sc = stratified_split(records, {0.7, 0.15, 0.15}, 12);
  CHECK(sa.by_sample != sc.by_sample);

  // two sources, 40 + 60: per-source counts within +-1 of the exact ratios
  std::vector<SampleRecord> mixed;
  for (int i = 0; i < 40; ++i)
    mixed.push_back(embedded_record("a" + std::to_string(i), "a", Organ::breast, 0.5));
  for (int i = 0; i < 60; ++i)
    mixed.push_back(embedded_record("b" + std::to_string(i), "b", Organ::lung, 0.5));
  SplitAssignment sm = stratified_split(mixed, {0.7, 0.15, 0.15}, 3);
  std::map<std::string, std::array<int, 3>> per_source{{"a", {0, 0, 0}}, {"b", {0, 0, 0}}};
  for (const auto& rec : mixed) {
    Split sp = sm.by_sample.at(rec.sample_id);
    per_source[rec.source_dataset][static_cast<int>(sp)]++;
  }
  CHECK(std::abs(per_source["a"][0] - 28) <= 1);
  CHECK(std::abs(per_source["a"][1] - 6) <= 1);
  CHECK(std::abs(per_source["a"][2] - 6) <= 1);
  CHECK(std::abs(per_source["b"][0] - 42) <= 1);
  CHECK(std::abs(per_source["b"][1] - 9) <= 1);
  CHECK(std::abs(per_source["b"][2] - 9) <= 1);

  // external records are rejected from the split input entirely
  auto ext = embedded_record("x", "a", Organ::breast, 0.5);
  ext.split = Split::external;
  std::vector<SampleRecord> with_ext = mixed;
  with_ext.push_back(ext);
  CHECK_THROWS_AS(stratified_split(with_ext, {0.7, 0.15, 0.15}, 3), std::invalid_argument);

  CHECK_THROWS_WITH_AS(stratified_split(mixed, {0.8, 0.1, 0.2}, 3), "ratios must sum to 1",
                       ConfigError);
}

TEST_CASE("per-source +-1 invariant over randomized registries") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SampleRecord> records;
    int sources = 1 + static_cast<int>(rng.below(5));
    std::vector<int> counts(sources);
    for (int s = 0; s < sources; ++s) {
      counts[s] = 1 + static_cast<int>(rng.below(80));
      for (int i = 0; i < counts[s]; ++i) {
        records.push_back(embedded_record("t" + std::to_string(trial) + "_s" + std::to_string(s) +
                                              "_" + std::to_string(i),
                                          "src" + std::to_string(s), Organ::breast, 0.5));
      }
    }
    SplitAssignment sa = stratified_split(records, {0.7, 0.15, 0.15}, rng.next());
    std::map<std::string, std::array<int, 3>> got;
    for (const auto& rec : records) {
      got[rec.source_dataset][static_cast<int>(sa.by_sample.at(rec.sample_id))]++;
    }
    const std::array<double, 3> ratios{0.7, 0.15, 0.15};
    for (int s = 0; s < sources; ++s) {
      const auto& g = got["src" + std::to_string(s)];
      for (int k = 0; k < 3; ++k) {
        CHECK(std::abs(g[k] - ratios[k] * counts[s]) <= 1.0 + 1e-9);
      }
      CHECK(g[0] + g[1] + g[2] == counts[s]);
    }
  }
}

TEST_CASE("apply_split and split file round trip") {
  auto dir = scratch_dir("split");
  std::vector<SampleRecord> records;
  for (int i = 0; i < 10; ++i)
    records.push_back(embedded_record("s" + std::to_string(i), "src", Organ::liver, 0.5));
  auto ext = embedded_record("ext", "held", Organ::liver, 0.5);
  ext.split = Split::external;
  ext.held_out = true;

  SplitAssignment sa = stratified_split(records, {0.7, 0.15, 0.15}, 5);
  records.push_back(ext);
  apply_split(records, sa);
  for (const auto& rec : records) {
    REQUIRE(rec.split.has_value());
    if (rec.sample_id == "ext") CHECK(*rec.split == Split::external);
    else CHECK(sa.by_sample.at(rec.sample_id) == *rec.split);
  }
  CHECK(sa.by_sample.count("ext") == 0);

  sa.save(dir / "split.json");
  SplitAssignment loaded = SplitAssignment::load(dir / "split.json");
  CHECK(loaded.by_sample == sa.by_sample);
  CHECK(loaded.seed == sa.seed);
  CHECK(loaded.ratios == sa.ratios);

  // byte-stable re-save
  loaded.save(dir / "split2.json");
  CHECK(slurp(dir / "split.json") == slurp(dir / "split2.json"));
}

// -------------------- synthetic corpus --------------------

TEST_CASE("synthetic corpus: balance, determinism, decodability") {
  auto records = generate_synthetic_corpus(120, 7);
  REQUIRE(records.size() == 120);

  std::map<std::pair<int, int>, int> cells;
  std::set<std::string> ids;
  for (const auto& rec : records) {
    REQUIRE(rec.embedded_image.has_value());
    REQUIRE(rec.condition.has_value());
    auto conds = canonical_conditions(rec.organ);
    int ci = static_cast<int>(std::find(conds.begin(), conds.end(), *rec.condition) -
                              conds.begin());
    REQUIRE(ci < 3);
    cells[{static_cast<int>(rec.organ), ci}]++;
    ids.insert(rec.sample_id);
    CHECK(rec.metadata.at("Tissue") == organ_name(rec.organ));
  }
  CHECK(ids.size() == 120);
  REQUIRE(cells.size() == 12);
  for (const auto& [cell, count] : cells) CHECK(count == 10);

  // byte-identical regeneration
  auto again = generate_synthetic_corpus(120, 7);
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].embedded_image->pixels == again[i].embedded_image->pixels);
  }
  auto other_seed = generate_synthetic_corpus(120, 8);
  CHECK(records[0].embedded_image->pixels != other_seed[0].embedded_image->pixels);

  // the documented inverse rule recovers every cell
  for (const auto& rec : records) {
    auto cell = oracle::decode_synthetic(*rec.embedded_image);
    CHECK(cell.organ == static_cast<int>(rec.organ));
    auto conds = canonical_conditions(rec.organ);
    CHECK(conds[cell.condition] == *rec.condition);
  }

  CHECK_THROWS_AS(generate_synthetic_corpus(11, 7), std::invalid_argument);

  // unbalanced-by-at-most-one for n not divisible by 12
  auto uneven = generate_synthetic_corpus(17, 3);
  std::map<std::pair<int, int>, int> unevencells;
  for (const auto& rec : uneven) {
    auto conds = canonical_conditions(rec.organ);
    int ci = static_cast<int>(std::find(conds.begin(), conds.end(), *rec.condition) -
                              conds.begin());
    unevencells[{static_cast<int>(rec.organ), ci}]++;
  }
  int lo = 1000, hi = 0;
  for (const auto& [cell, count] : unevencells) {
    lo = std::min(lo, count);
    hi = std::max(hi, count);
  }
  CHECK(unevencells.size() == 12);
  CHECK(hi - lo <= 1);
}

TEST_CASE("synthetic images survive PNG quantization") {
  auto dir = scratch_dir("synth_png");
  auto records = generate_synthetic_corpus(24, 5);
  for (const auto& rec : records) {
    auto path = dir / (rec.sample_id + ".png");
    write_png(path, *rec.embedded_image);
    Image back = read_png(path);
    REQUIRE(back.width == 256);
    REQUIRE(back.height == 256);
    auto cell = oracle::decode_synthetic(back);
    CHECK(cell.organ == static_cast<int>(rec.organ));
    auto conds = canonical_conditions(rec.organ);
    CHECK(conds[cell.condition] == *rec.condition);
  }

  // PNG encoding is deterministic
  write_png(dir / "a.png", *records[0].embedded_image);
  write_png(dir / "b.png", *records[0].embedded_image);
  CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));
}

// -------------------- image ops --------------------

TEST_CASE("image primitives") {
  Image img(4, 2);  // 4 wide, 2 tall
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) img.at(y, x) = y * 4 + x;

  Image flipped = hflip(img);
  CHECK(flipped.at(0, 0) == 3);
  CHECK(flipped.at(0, 3) == 0);
  CHECK(flipped.at(1, 0) == 7);

  Image c = crop(img, 1, 0, 2, 2);
  CHECK(c.width == 2);
  CHECK(c.height == 2);
  CHECK(c.at(0, 0) == 1);
  CHECK(c.at(1, 1) == 6);
  CHECK_THROWS(crop(img, 3, 0, 2, 2));

  CHECK(mean_intensity(Image(8, 8, 0.25)) == doctest::Approx(0.25));

  // bilinear resize of a constant image stays constant; identity size is exact
  Image constant(10, 6, 0.4);
  Image r = resize_bilinear(constant, 17, 5);
  for (double v : r.pixels) CHECK(v == doctest::Approx(0.4));
  Image same = resize_bilinear(img, 4, 2);
  CHECK(same.pixels == img.pixels);
}
