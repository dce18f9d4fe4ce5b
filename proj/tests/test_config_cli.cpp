#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "scl/checkpoint.hpp"
#include "scl/config.hpp"
#include "scl/dataset.hpp"

using namespace scl;
namespace fs = std::filesystem;

TEST(Config, SerializeParseRoundTripPresets) {
  for (ExperimentConfig cfg : {default_ecg_config(), default_imu_config()}) {
    ExperimentConfig back = parse_config_text(serialize_config(cfg));
    EXPECT_TRUE(back == cfg);
  }
}

TEST(Config, SerializeParseRoundTripMutated) {
  ExperimentConfig cfg = default_imu_config();
  cfg.encoder.kind = EncoderArch::MLP;
  cfg.encoder.blocks.clear();
  cfg.encoder.hidden = {96, 48};
  cfg.encoder.latent = 24;
  cfg.encoder.vae = true;
  cfg.partition = {6, 18, 0};
  cfg.hp.mode = TrainMode::STANDARD_CONTRASTIVE;
  cfg.hp.beta = 1.0 / 3.0;  // exercises %.17g
  cfg.hp.lambda = 0.7071067811865476;
  cfg.optim.kind = OptimizerKind::SGD;
  cfg.optim.lr = 3e-4;
  cfg.train.seed = 9876543210123456789ULL;
  cfg.train.test_frac = 0.15;
  cfg.transform.angle_max = 2.356194490192345;
  cfg.run.out = "elsewhere";
  cfg.run.tag = "trial";
  ExperimentConfig back = parse_config_text(serialize_config(cfg));
  EXPECT_TRUE(back == cfg);

  // with_run=false drops only the run section
  std::string no_run = serialize_config(cfg, false);
  EXPECT_EQ(no_run.find("run."), std::string::npos);
  ExperimentConfig headerish = parse_config_text(no_run);
  ExperimentConfig expect = cfg;
  expect.run = RunSettings{};
  EXPECT_TRUE(headerish == expect);
}

TEST(Config, CommentsBlanksAndWhitespace) {
  ExperimentConfig base = default_imu_config();
  ExperimentConfig got = parse_config_text(
      "# full-line comment\n"
      "\n"
      "   hp.beta =  2.5   # trailing comment\n"
      "\ttrain.batch=12\n",
      base);
  EXPECT_EQ(got.hp.beta, 2.5);
  EXPECT_EQ(got.train.batch, 12);
  ExperimentConfig expect = base;
  expect.hp.beta = 2.5;
  expect.train.batch = 12;
  EXPECT_TRUE(got == expect);
}

TEST(Config, RejectsUnknownAndMalformedLines) {
  try {
    parse_config_text("hp.beta = 1\nhp.gamma = 2\n");
    FAIL() << "expected unknown-key error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("hp.gamma"), std::string::npos);
  }
  try {
    parse_config_text("hp.beta = 1\n\nnot a key value line\n");
    FAIL() << "expected malformed-line error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  // keys must carry their section
  EXPECT_THROW(parse_config_text("beta = 1\n"), std::invalid_argument);
  // type errors name the key
  try {
    parse_config_text("train.batch = soon\n");
    FAIL() << "expected integer-parse error";
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("train.batch"), std::string::npos);
    EXPECT_NE(msg.find("soon"), std::string::npos);
  }
  EXPECT_THROW(parse_config_text("encoder.vae = yes\n"), std::invalid_argument);
  EXPECT_THROW(parse_config_text("hp.mode = smooth\n"), std::invalid_argument);
}

TEST(Config, ConvBlockGrammar) {
  ExperimentConfig cfg = parse_config_text("encoder.blocks = 8x5s2,16x3s1\n");
  ASSERT_EQ(cfg.encoder.blocks.size(), 2u);
  EXPECT_TRUE((cfg.encoder.blocks[0] == ConvBlock{8, 5, 2}));
  EXPECT_TRUE((cfg.encoder.blocks[1] == ConvBlock{16, 3, 1}));
  EXPECT_THROW(parse_config_text("encoder.blocks = 8x5\n"), std::invalid_argument);
  EXPECT_THROW(parse_config_text("encoder.blocks = 8-5-2\n"), std::invalid_argument);
}

TEST(Config, OverridesApplyAfterFile) {
  ExperimentConfig cfg = default_ecg_config();
  apply_overrides(cfg, {"hp.mode=structured", "hp.beta = 0.5", "run.tag=x1"});
  EXPECT_EQ(cfg.hp.mode, TrainMode::STRUCTURED);
  EXPECT_EQ(cfg.hp.beta, 0.5);
  EXPECT_EQ(cfg.run.tag, "x1");
  EXPECT_THROW(apply_overrides(cfg, {"hp.beta"}), std::invalid_argument);
}

TEST(Config, ValidationNamesTheConflict) {
  ExperimentConfig cfg = default_imu_config();
  cfg.partition = {8, 8, 0};
  try {
    cfg.validate();
    FAIL() << "expected partition/latent mismatch";
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("16"), std::string::npos);
    EXPECT_NE(msg.find("32"), std::string::npos);
  }

  ExperimentConfig win = default_imu_config();
  win.encoder.in_length = 64;
  try {
    win.validate();
    FAIL() << "expected window mismatch";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("family window"), std::string::npos);
  }

  ExperimentConfig ph = default_imu_config();
  ph.transform.kind = TransformKind::PHASE_SHIFT;
  EXPECT_THROW(ph.validate(), std::invalid_argument);  // circular shift needs 1 channel

  ExperimentConfig head = default_imu_config();
  head.head.output = 4;
  EXPECT_THROW(head.validate(), std::invalid_argument);

  ExperimentConfig frac = default_imu_config();
  frac.train.test_frac = 1.0;
  EXPECT_THROW(frac.validate(), std::invalid_argument);
}

TEST(Config, LoadConfigFromFile) {
  fs::path p = fs::temp_directory_path() / "scl_cfg_test.txt";
  ExperimentConfig cfg = default_ecg_config();
  cfg.hp.lambda = 0.25;
  {
    std::ofstream f(p);
    f << serialize_config(cfg);
  }
  ExperimentConfig back = load_config(p.string());
  EXPECT_TRUE(back == cfg);
  EXPECT_THROW(load_config((p.string() + ".missing")), IoError);
  fs::remove(p);
}

TEST(Config, DatasetCsvRoundTrip) {
  Dataset ds = make_dataset(imu_family(), 4, 3);
  fs::path p = fs::temp_directory_path() / "scl_ds_test.csv";
  write_dataset_csv(ds, p.string());
  Dataset back = read_dataset_csv(p.string(), ds.num_classes);
  EXPECT_EQ(back.channels, ds.channels);
  EXPECT_EQ(back.length, ds.length);
  EXPECT_EQ(back.num_classes, ds.num_classes);
  EXPECT_EQ(back.y, ds.y);
  ASSERT_EQ(back.x.size(), ds.x.size());
  for (size_t i = 0; i < ds.x.size(); ++i) EXPECT_EQ(back.x[i], ds.x[i]);  // 17 digits: bit-exact
  fs::remove(p);
}

TEST(Config, CheckpointHashIgnoresRunLocation) {
  ExperimentConfig a = default_imu_config();
  a.run.out = "here";
  a.run.tag = "first";
  ExperimentConfig b = a;
  b.run.out = "there/deeply/nested";
  b.run.tag = "second";
  Model m = Model::init(a.encoder, a.head, a.partition, 0);
  fs::path pa = fs::temp_directory_path() / "scl_ck_a.ckpt";
  fs::path pb = fs::temp_directory_path() / "scl_ck_b.ckpt";
  save_model_checkpoint(pa.string(), a, {0, 0}, m);
  save_model_checkpoint(pb.string(), b, {0, 0}, m);
  EXPECT_EQ(file_hash(pa.string()), file_hash(pb.string()));
  fs::remove(pa);
  fs::remove(pb);
}
