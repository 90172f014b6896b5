// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>

#include "sadu/checkpoint.hpp"
#include "sadu/error.hpp"

namespace {

sadu::ModelConfig small() {
  sadu::ModelConfig c;
  c.channels = 2;
  c.layers_per_block = 1;
  c.levels = 1;
  c.attn_channels = 1;
  c.embed_dim = 2;
  c.freq_bins = 7;
  c.t_window = 4;
  c.attn_blocks = std::vector<std::size_t>{2, 3};
  return c;
}

sadu::Checkpoint sample(bool with_adam) {
  sadu::Checkpoint ck;
  ck.config = small();
  ck.params = sadu::init_params<float>(ck.config, 21);
  if (with_adam) {
    sadu::TrainOptions opt;
    opt.lr = 1e-3;
    ck.adam = sadu::make_adam_state(ck.params, opt);
    ck.adam->step = 17;
    for (auto& m : ck.adam->m)
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.001f * static_cast<float>(i);
    for (auto& v : ck.adam->v)
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.5f + static_cast<float>(i);
  }
  ck.seed = 99;
  ck.step = 17;
  sadu::Rng rng(5);
  rng();
  ck.rng_state = sadu::rng_state(rng);
  return ck;
}

sadu::CheckpointError::Kind kind_of(const std::vector<unsigned char>& bytes) {
  try {
    sadu::deserialize_checkpoint(bytes);
  } catch (const sadu::CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected CheckpointError";
  return sadu::CheckpointError::Kind::kInconsistent;
}

}  // namespace

TEST(Checkpoint, SerializeRoundTripIsByteIdentical) {
  for (bool adam : {false, true}) {
    const auto ck = sample(adam);
    const auto bytes = sadu::serialize_checkpoint(ck);
    const auto back = sadu::deserialize_checkpoint(bytes);
    EXPECT_EQ(back.config, ck.config);
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.step, 17u);
    EXPECT_EQ(back.rng_state, ck.rng_state);
    EXPECT_EQ(back.adam.has_value(), adam);
    if (adam) EXPECT_EQ(*back.adam, *ck.adam);
    ASSERT_EQ(back.params.size(), ck.params.size());
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
      EXPECT_EQ(back.params.entries()[i].first, ck.params.entries()[i].first);
      const auto a = back.params.entries()[i].second.data(), b = ck.params.entries()[i].second.data();
      EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
    }
    EXPECT_EQ(sadu::serialize_checkpoint(back), bytes);
  }
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "sadu_test.ckpt";
  const auto ck = sample(true);
  sadu::save_checkpoint(path, ck);
  EXPECT_EQ(sadu::serialize_checkpoint(sadu::load_checkpoint(path)), sadu::serialize_checkpoint(ck));
  std::filesystem::remove(path);
  EXPECT_THROW(sadu::load_checkpoint(path), sadu::IoError);
}

TEST(Checkpoint, BadMagicAndVersion) {
  auto bytes = sadu::serialize_checkpoint(sample(false));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(kind_of(bad), sadu::CheckpointError::Kind::kBadMagic);
  bad = bytes;
  bad[4] = static_cast<unsigned char>(sadu::kCheckpointVersion + 1);
  EXPECT_EQ(kind_of(bad), sadu::CheckpointError::Kind::kVersionMismatch);
}

TEST(Checkpoint, EveryTruncationIsDetected) {
  const auto bytes = sadu::serialize_checkpoint(sample(true));
  for (std::size_t len = 0; len < bytes.size(); len += 1 + len / 8) {
    const std::vector<unsigned char> cut(bytes.begin(), bytes.begin() + len);
    EXPECT_THROW(sadu::deserialize_checkpoint(cut), sadu::CheckpointError) << "length " << len;
  }
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_EQ(kind_of(longer), sadu::CheckpointError::Kind::kInconsistent);
}

TEST(Checkpoint, ParameterSetMustMatchConfig) {
  auto ck = sample(false);
  ck.config.channels = 3;  // params were built for 2 channels
  EXPECT_EQ(kind_of(sadu::serialize_checkpoint(ck)), sadu::CheckpointError::Kind::kInconsistent);
}
