#include <doctest.h>

#include "pedintent/errors.hpp"
#include "pedintent/model.hpp"
#include "pedintent/synthetic.hpp"

using namespace pedintent;

namespace {

ClipConfig clips_for(const ModelSpec& spec) {
  ClipConfig c;
  c.local_context = spec.visual(VisualInput::kLocalContext).has_value();
  c.local_surround = spec.visual(VisualInput::kLocalSurround).has_value();
  c.global_context = spec.visual(VisualInput::kGlobalContext).has_value();
  return c;
}

std::vector<ObservationWindow> windows_for(const ModelSpec& spec, std::size_t tracks = 3, std::uint64_t seed = 0) {
  return synthetic_windows({.seed = seed, .n_tracks = tracks}, {4, 30, 30, 15}, clips_for(spec));
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("every named config builds and predicts probabilities") {
  for (const char* name : kNamedConfigs) {
    CAPTURE(name);
    const auto spec = named_config(name);
    CHECK(spec.violations().empty());
    const auto model = Model<float>::build(spec);
    const auto ws = windows_for(spec);
    const auto p = model.predict(make_batch<float>(spec, ws));
    REQUIRE(p.size() == ws.size());
    for (double v : p) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    CHECK(model.predict(make_batch<float>(spec, ws)) == p);
  }
}

TEST_CASE("same seed gives the same weights") {
  auto spec = named_config("ours2_nonvisual");
  CHECK(Model<float>::build(spec).state() == Model<float>::build(spec).state());
  spec.seed = 1;
  CHECK(Model<float>::build(spec).state() != Model<float>::build(named_config("ours2_nonvisual")).state());
}

TEST_CASE("bbox-only model is a strict submodel") {
  const auto small = Model<float>::build(named_config("ours6_bboxes")).parameter_count();
  const auto large = Model<float>::build(named_config("ours3")).parameter_count();
  CHECK(small < large);
  CHECK(Model<float>::build(named_config("ours1")).parameter_count() < large);
}

TEST_CASE("non-visual model needs no frames and ignores pixels") {
  const auto spec = named_config("ours2_nonvisual");
  CHECK(spec.branch_count() == 1);
  const auto model = Model<float>::build(spec);
  auto ws = windows_for(spec);
  CHECK_FALSE(ws[0].local_context.has_value());
  const auto p = model.predict(make_batch<float>(spec, ws));

  ClipConfig all;
  all.local_context = all.local_surround = all.global_context = true;
  auto with_pixels = synthetic_windows({.n_tracks = 3}, {4, 30, 30, 15}, all);
  for (auto& w : with_pixels)
    for (auto input : kAllVisualInputs)
      for (auto& v : w.clip(input)->pixels) v = 1.0f - v;
  CHECK(model.predict(make_batch<float>(spec, with_pixels)) == p);
}

TEST_CASE("missing inputs are named") {
  const auto spec = named_config("ours2_nonvisual");
  auto ws = windows_for(spec);
  ws[1].pose = {};
  try {
    make_batch<float>(spec, ws);
    FAIL("expected an input error");
  } catch (const InputError& e) {
    CHECK(contains(e.what(), "pose"));
  }
  const auto visual = named_config("ours1");
  try {
    make_batch<float>(visual, windows_for(spec));
    FAIL("expected an input error");
  } catch (const InputError& e) {
    CHECK(contains(e.what(), "local_surround"));
  }
}

TEST_CASE("channel ablation") {
  const auto boxes = named_config("ours6_bboxes");
  const auto all = named_config("ours2_nonvisual");
  CHECK(boxes.feature_width() == 4);
  CHECK(all.feature_width() == 47);
  auto ws = windows_for(all);
  auto changed = ws;
  for (auto& w : changed)
    for (auto& v : w.pose.values) v += 5.0f;
  const auto mb = Model<double>::build(boxes), ma = Model<double>::build(all);
  CHECK(mb.predict(make_batch<double>(boxes, changed)) == mb.predict(make_batch<double>(boxes, ws)));
  CHECK(ma.predict(make_batch<double>(all, changed)) != ma.predict(make_batch<double>(all, ws)));
}

TEST_CASE("causal non-visual encoder") {
  auto features_only = named_config("ours9_causal");
  features_only.vivit = {};
  const auto model = Model<double>::build(named_config("ours9_causal"));
  const auto ws = synthetic_windows({.n_tracks = 2}, {8, 30, 30, 15});
  const auto full = make_batch<double>(features_only, ws);
  ForwardContext ctx;
  const auto h = model.encode_nonvisual(*full.nonvisual, ctx);
  for (std::size_t t = 1; t <= 7; ++t) {
    const auto prefix = model.encode_nonvisual(slice(*full.nonvisual, 1, 0, t), ctx);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t s = 0; s < t; ++s)
        for (std::size_t d = 0; d < 64; d += 7) CHECK(std::abs(prefix.at({b, s, d}) - h.at({b, s, d})) < 1e-12);
  }
  const auto open = Model<double>::build(named_config("ours1"));
  const auto ho = open.encode_nonvisual(*full.nonvisual, ctx);
  const auto po = open.encode_nonvisual(slice(*full.nonvisual, 1, 0, 3), ctx);
  CHECK(std::abs(po.at({0, 0, 0}) - ho.at({0, 0, 0})) > 1e-9);
}

TEST_CASE("state round trip") {
  const auto spec = named_config("ours8_ft");
  const auto a = Model<float>::build(spec);
  auto other = spec;
  other.seed = 5;
  auto b = Model<float>::build(other);
  const auto ws = windows_for(spec);
  CHECK(a.predict(make_batch<float>(spec, ws)) != b.predict(make_batch<float>(spec, ws)));
  b.load_state(decode_checkpoint(encode_checkpoint(a.state())));
  CHECK(a.predict(make_batch<float>(spec, ws)) == b.predict(make_batch<float>(spec, ws)));

  auto bad = a.state();
  bad[0].name = "renamed";
  CHECK_THROWS_AS(b.load_state(bad), LoadError);
  bad = a.state();
  bad.pop_back();
  CHECK_THROWS_AS(b.load_state(bad), LoadError);
  CHECK_THROWS_AS(b.load_state(Model<float>::build(named_config("ours6_bboxes")).state()), LoadError);
}

TEST_CASE("parameter layout") {
  const auto m = Model<float>::build(named_config("ours1"));
  const auto params = m.named_parameters();
  CHECK(params.front().name == "nonvisual.proj.weight");
  CHECK(params.back().name == "head.bias");
  std::size_t total = 0;
  bool surround_norm = false;
  for (const auto& p : params) {
    total += p.tensor.numel();
    surround_norm |= p.name == "vivit.local_surround.norm.gamma";
  }
  CHECK(surround_norm);
  CHECK(total == m.parameter_count());
  CHECK(Model<float>::build(named_config("ours8_ft")).named_parameters().front().name == "nonvisual.tokenizer.weight");
}

TEST_CASE("spec violations") {
  ModelSpec empty;
  CHECK_THROWS_AS(empty.validate(), ConfigError);
  ModelSpec ft;
  ft.use_feature_tokenizer = true;
  ft.visual(VisualInput::kGlobalContext) = named_config("ours1").visual(VisualInput::kGlobalContext);
  CHECK(ft.violations().size() == 1);

  auto s = named_config("ours1");
  s.visual(VisualInput::kGlobalContext)->tubelet.d_model = 32;
  s.encoder.n_heads = 3;
  s.channels.push_back(NonVisualChannel::kBbox);
  try {
    s.validate();
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(contains(e.what(), "global_context"));
    CHECK(contains(e.what(), "twice"));
    CHECK(contains(e.what(), "encoder"));
  }
  CHECK_THROWS_AS(named_config("ours5"), ConfigError);
  CHECK_THROWS_AS(Model<float>::build(s), ConfigError);
}

TEST_CASE("spec json") {
  for (const char* name : kNamedConfigs) {
    CAPTURE(name);
    const auto spec = named_config(name);
    CHECK(model_spec_from_json(to_json(spec)) == spec);
    CHECK(model_spec_from_json(nlohmann::json(name)) == spec);
  }
  const auto j = nlohmann::json::parse(R"({"preset": "ours6_bboxes", "seed": 4, "fusion": {"kind": "recurrent"}})");
  const auto s = model_spec_from_json(j);
  CHECK(s.seed == 4);
  CHECK(s.fusion.kind == FusionKind::kRecurrent);
  CHECK(s.channels == std::vector<NonVisualChannel>{NonVisualChannel::kBbox});
  CHECK_THROWS_AS(model_spec_from_json(nlohmann::json::parse(R"({"chanels": ["bbox"]})")), ConfigError);
  CHECK_THROWS_AS(model_spec_from_json(nlohmann::json::parse(R"({"channels": ["bbox"], "encoder": {"n_layers": "two"}})")),
                  ConfigError);
  CHECK_THROWS_AS(model_spec_from_json(nlohmann::json::parse(R"({"channels": ["velocity"]})")), ConfigError);
}

TEST_CASE("translation leaves non-visual outputs bit-identical") {
  auto d = generate_synthetic({.seed = 4, .n_tracks = 6});
  auto moved = d.tracks;
  for (auto& t : moved)
    for (auto& r : t.records) {
      r.bbox = {r.bbox.x_tl + 37.5, r.bbox.y_tl + 11.25, r.bbox.x_br + 37.5, r.bbox.y_br + 11.25};
      r.center = Center::of(r.bbox);
    }
  const auto a = build_windows(d.tracks, {}, nullptr, {});
  const auto b = build_windows(moved, {}, nullptr, {});
  for (const char* name : {"ours6_bboxes", "ours8_ft"}) {
    auto spec = named_config(name);
    spec.channels = {NonVisualChannel::kBbox, NonVisualChannel::kCenter};
    const auto m = Model<float>::build(spec);
    CHECK(m.predict(make_batch<float>(spec, a)) == m.predict(make_batch<float>(spec, b)));
  }
}
