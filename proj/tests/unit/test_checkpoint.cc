#include <fstream>

#include <gtest/gtest.h>

#include "kge/checkpoint.h"
#include "kge/error.h"
#include "support/toy_kg.h"

namespace kge {
namespace {

namespace fs = std::filesystem;

ModelConfig small_config(DecoderKind kind) {
  ModelConfig cfg;
  cfg.dataset = "toy";
  cfg.decoder = kind;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.key_dim = 4;
  cfg.value_dim = 4;
  cfg.hidden_dim = 16;
  cfg.batch_size = 16;
  cfg.epochs = 2;
  cfg.eval_every = 1;
  return cfg;
}

TEST(TensorFile, RoundTrip) {
  const auto dir = testing::scratch_dir("tensor_file");
  Tensor<float> a = Tensor<float>::matrix({{1.5f, -2.0f}, {3.25f, 1e-30f}});
  Tensor<float> b({2, 1, 3}, 0.125f);
  write_tensor_file(dir / "t.bin", {{"a", &a}, {"b.c/d", &b}});
  const auto back = read_tensor_file(dir / "t.bin");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].first, "a");
  EXPECT_EQ(back[0].second, a);
  EXPECT_EQ(back[1].first, "b.c/d");
  EXPECT_EQ(back[1].second, b);
  // Little-endian float32 payload right after the header of the first tensor.
  std::ifstream in(dir / "t.bin", std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "KGET");
  const std::size_t payload = 4 + 4 + 4 + 4 + 1 + 4 + 2 * 8;
  EXPECT_EQ(bytes[payload + 0], 0x00);
  EXPECT_EQ(bytes[payload + 3], 0x3f);  // 1.5f = 0x3fc00000
  EXPECT_EQ(bytes[payload + 2], 0xc0);
}

TEST(TensorFile, RejectsGarbage) {
  const auto dir = testing::scratch_dir("tensor_garbage");
  std::ofstream(dir / "t.bin") << "nope";
  EXPECT_THROW(read_tensor_file(dir / "t.bin"), IoError);
  EXPECT_THROW(read_tensor_file(dir / "missing.bin"), IoError);
}

class ResumeTest : public ::testing::TestWithParam<DecoderKind> {};

TEST_P(ResumeTest, BitExactContinuation) {
  const Dataset ds = testing::make_toy_dataset();
  const PreparedData data = prepare_data(ds);
  const auto cfg = small_config(GetParam());

  Trainer straight(cfg, data.entity_count, data.relation_count);
  straight.train_epoch(data.train);
  const double loss2 = straight.train_epoch(data.train).mean_loss;

  const auto dir = testing::scratch_dir("resume");
  Trainer first(cfg, data.entity_count, data.relation_count);
  first.train_epoch(data.train);
  save_checkpoint(dir, first, data.vocab_hash);
  auto loaded = load_checkpoint(dir);
  EXPECT_EQ(loaded.info.epoch, 1u);
  EXPECT_EQ(loaded.info.dataset_hash, data.vocab_hash);
  EXPECT_EQ(loaded.info.config_hash, config_hash(cfg));
  const double resumed = loaded.trainer->train_epoch(data.train).mean_loss;
  EXPECT_EQ(resumed, loss2);

  const auto a = straight.model().parameters();
  const auto b = loaded.trainer->model().parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;
  const auto ba = straight.model().buffers();
  const auto bb = loaded.trainer->model().buffers();
  for (std::size_t i = 0; i < ba.size(); ++i) EXPECT_EQ(*ba[i].second, *bb[i].second) << ba[i].first;
}

INSTANTIATE_TEST_SUITE_P(Decoders, ResumeTest, ::testing::Values(DecoderKind::kTwoMult, DecoderKind::kTucker));

TEST(Checkpoint, FitResumeMatchesUninterrupted) {
  const PreparedData data = prepare_data(testing::make_toy_dataset());
  auto cfg = small_config(DecoderKind::kTwoMult);
  cfg.epochs = 3;
  const auto full_dir = testing::scratch_dir("fit_full");
  FitOptions full;
  full.out_dir = full_dir;
  fit(cfg, data, full);

  const auto part_dir = testing::scratch_dir("fit_part");
  auto short_cfg = cfg;
  short_cfg.epochs = 1;
  FitOptions part;
  part.out_dir = part_dir;
  fit(short_cfg, data, part);
  FitOptions rest;
  rest.out_dir = part_dir;
  rest.resume_from = part_dir / "final";
  const auto result = fit(cfg, data, rest);
  EXPECT_EQ(result.epochs_run, 2u);

  const auto a = read_tensor_file(full_dir / "final" / "tensors.bin");
  const auto b = read_tensor_file(part_dir / "final" / "tensors.bin");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(a[i].second, b[i].second) << a[i].first;
  }
}

TEST(Checkpoint, ResumeRejectsOtherDataset) {
  const PreparedData data = prepare_data(testing::make_toy_dataset());
  const auto cfg = small_config(DecoderKind::kTwoMult);
  const auto dir = testing::scratch_dir("resume_other");
  Trainer t(cfg, data.entity_count, data.relation_count);
  save_checkpoint(dir, t, data.vocab_hash + 1);
  FitOptions options;
  options.resume_from = dir;
  EXPECT_THROW(fit(cfg, data, options), ContractError);
}

TEST(Checkpoint, TamperedConfigDetected) {
  const PreparedData data = prepare_data(testing::make_toy_dataset());
  const auto dir = testing::scratch_dir("tampered");
  Trainer t(small_config(DecoderKind::kTwoMult), data.entity_count, data.relation_count);
  save_checkpoint(dir, t, data.vocab_hash);
  std::ifstream in(dir / "manifest.json");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  in.close();
  const auto pos = text.find("\"heads\": 2");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 10, "\"heads\": 3");
  std::ofstream(dir / "manifest.json") << text;
  EXPECT_THROW(load_checkpoint(dir), IoError);
}

TEST(Checkpoint, MissingDirectory) {
  EXPECT_THROW(load_checkpoint("/nonexistent/checkpoint"), IoError);
}

}  // namespace
}  // namespace kge
