#include "qspace/prior_io.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

using namespace qspace;
using qspace::testing::Gen;

namespace {

PriorField sample_field(Gen& g) {
  const ShBasis basis(4);
  PriorField field(basis, {2, 1, 2}, RankRule::variance(0.85));
  for (int x = 0; x < 2; ++x)
    for (int z = 0; z < 2; ++z)
      field.set({x, 0, z}, make_prior(Vectord(qspace::testing::random_vector(g, basis.dimension())),
                                      qspace::testing::random_spd(g, basis.dimension(), 0.05), field.rank_rule(),
                                      2.5e-4));
  return field;
}

}  // namespace

TEST(PriorIo, BinaryRoundTripIsBitExact) {
  Gen g(61);
  const PriorField field = sample_field(g);
  const std::string bytes = encode_prior_field(field);
  const PriorField back = decode_prior_field(bytes);
  EXPECT_EQ(back.basis(), field.basis());
  EXPECT_EQ(back.dims(), field.dims());
  EXPECT_EQ(back.rank_rule(), field.rank_rule());
  ASSERT_EQ(back.size(), field.size());
  for (const auto& [idx, prior] : field.voxels()) {
    const auto& other = back.at(idx);
    EXPECT_EQ(other.mean, prior.mean);
    EXPECT_EQ(other.covariance, prior.covariance);
    EXPECT_EQ(other.eigenvalues, prior.eigenvalues);
    EXPECT_EQ(other.noise_variance, prior.noise_variance);
  }
  EXPECT_EQ(encode_prior_field(back), bytes);
}

TEST(PriorIo, LayoutSizeAndMagic) {
  Gen g(62);
  const PriorField field = sample_field(g);
  const std::string bytes = encode_prior_field(field);
  const std::size_t J = 15;
  const std::size_t header = 8 + 4 * 3 + 4 + 8 + 4 * 3 + 8 + 8;
  const std::size_t voxel = 4 * 3 + 8 * J + 8 * J * (J + 1) / 2;
  EXPECT_EQ(bytes.size(), header + 4 * voxel);
  EXPECT_EQ(bytes.substr(0, 8), "QSPRIOR1");
}

TEST(PriorIo, RejectsCorruptInput) {
  Gen g(63);
  const std::string bytes = encode_prior_field(sample_field(g));
  EXPECT_THROW(decode_prior_field("NOTPRIOR" + bytes.substr(8)), ValidationError);
  EXPECT_THROW(decode_prior_field(bytes.substr(0, bytes.size() - 3)), ValidationError);
  EXPECT_THROW(decode_prior_field(bytes + "x"), ValidationError);
  std::string bad_j = bytes;
  const std::uint32_t j = 16;
  std::memcpy(bad_j.data() + 12, &j, 4);
  EXPECT_THROW(decode_prior_field(bad_j), ValidationError);
}

TEST(PriorIo, RejectsMixedNoiseVariance) {
  const ShBasis basis(2);
  PriorField field(basis, {2, 1, 1}, RankRule::fixed(2));
  const Vectord mean = Vectord::Zero(6);
  const Matrixd cov = Matrixd::Identity(6, 6);
  field.set({0, 0, 0}, make_prior(mean, cov, field.rank_rule(), 1e-4));
  field.set({1, 0, 0}, make_prior(mean, cov, field.rank_rule(), 2e-4));
  EXPECT_THROW(encode_prior_field(field), ValidationError);
}

TEST(PriorIo, FileAndSidecar) {
  Gen g(64);
  const PriorField field = sample_field(g);
  const auto dir = std::filesystem::temp_directory_path() / "qspace_prior_io_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "field.qsp";
  save_prior_field(field, path);
  ASSERT_TRUE(std::filesystem::exists(path.string() + ".json"));
  const PriorField back = load_prior_field(path);
  EXPECT_EQ(encode_prior_field(back), encode_prior_field(field));
  const auto sidecar = prior_field_sidecar(field);
  EXPECT_EQ(sidecar.at("dimension"), 15);
  EXPECT_EQ(sidecar.at("voxels"), 4);
  EXPECT_THROW(load_prior_field(dir / "missing.qsp"), ValidationError);
  std::filesystem::remove_all(dir);
}
