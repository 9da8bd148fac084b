#include "qspace/prior_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace qspace {

static_assert(std::endian::native == std::endian::little, "prior container assumes little-endian");

namespace {

constexpr char kMagic[8] = {'Q', 'S', 'P', 'R', 'I', 'O', 'R', '1'};

class Writer {
 public:
  template <typename T>
  void put(T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void raw(const char* data, std::size_t n) { out_.append(data, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw ValidationError("prior file is truncated");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void expect(const char* data, std::size_t n) {
    if (pos_ + n > bytes_.size() || std::memcmp(bytes_.data() + pos_, data, n) != 0)
      throw ValidationError("not a prior field file (bad magic)");
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_prior_field(const PriorField& field) {
  const int J = field.basis().dimension();
  double noise = 0.0;
  bool first = true;
  for (const auto& [idx, prior] : field.voxels()) {
    if (first) {
      noise = prior.noise_variance;
      first = false;
    } else if (prior.noise_variance != noise) {
      throw ValidationError("all voxels in a prior field must share one noise variance");
    }
  }

  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(field.basis().max_degree()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(J));
  w.put<std::uint32_t>(field.rank_rule().kind == RankRule::Kind::Fixed ? 0u : 1u);
  w.put<std::int32_t>(field.rank_rule().rank);
  w.put<double>(field.rank_rule().fraction);
  for (int d : field.dims()) w.put<std::int32_t>(d);
  w.put<double>(noise);
  w.put<std::uint64_t>(field.size());
  for (const auto& [idx, prior] : field.voxels()) {
    for (int a : idx) w.put<std::int32_t>(a);
    for (int j = 0; j < J; ++j) w.put<double>(prior.mean[j]);
    for (int r = 0; r < J; ++r)
      for (int c = 0; c <= r; ++c) w.put<double>(prior.covariance(r, c));
  }
  return w.take();
}

PriorField decode_prior_field(const std::string& bytes) {
  Reader r(bytes);
  r.expect(kMagic, sizeof(kMagic));
  const auto L = static_cast<int>(r.get<std::uint32_t>());
  const auto J = static_cast<int>(r.get<std::uint32_t>());
  if (L < 0 || L % 2 != 0 || L > 64 || ShBasis::dimension_for(L) != J)
    throw ValidationError("prior file has inconsistent basis header");
  RankRule rule;
  const auto kind = r.get<std::uint32_t>();
  if (kind > 1) throw ValidationError("prior file has unknown rank rule");
  rule.kind = kind == 0 ? RankRule::Kind::Fixed : RankRule::Kind::VarianceFraction;
  rule.rank = r.get<std::int32_t>();
  rule.fraction = r.get<double>();
  std::array<int, 3> dims{};
  for (int& d : dims) d = r.get<std::int32_t>();
  const double noise = r.get<double>();
  const auto count = r.get<std::uint64_t>();

  PriorField field(ShBasis(L), dims, rule);
  for (std::uint64_t v = 0; v < count; ++v) {
    VoxelIndex idx{};
    for (int& a : idx) a = r.get<std::int32_t>();
    Vectord mean(J);
    for (int j = 0; j < J; ++j) mean[j] = r.get<double>();
    Matrixd cov(J, J);
    for (int row = 0; row < J; ++row) {
      for (int c = 0; c <= row; ++c) {
        cov(row, c) = r.get<double>();
        cov(c, row) = cov(row, c);
      }
    }
    field.set(idx, make_prior(std::move(mean), std::move(cov), rule, noise));
  }
  if (!r.done()) throw ValidationError("prior file has trailing bytes");
  return field;
}

nlohmann::json prior_field_sidecar(const PriorField& field) {
  nlohmann::json rule;
  if (field.rank_rule().kind == RankRule::Kind::Fixed) {
    rule = {{"kind", "fixed"}, {"rank", field.rank_rule().rank}};
  } else {
    rule = {{"kind", "variance"}, {"fraction", field.rank_rule().fraction}};
  }
  return {
      {"format", "qspace-prior-field"},
      {"version", 1},
      {"basis", "real-symmetric-spherical-harmonics"},
      {"max_degree", field.basis().max_degree()},
      {"dimension", field.basis().dimension()},
      {"rank_rule", rule},
      {"dims", field.dims()},
      {"voxels", field.size()},
  };
}

void save_prior_field(const PriorField& field, const std::filesystem::path& path) {
  const std::string bytes = encode_prior_field(field);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::ofstream sidecar(path.string() + ".json");
  if (!sidecar) throw ValidationError("cannot write sidecar for " + path.string());
  sidecar << prior_field_sidecar(field).dump(2) << '\n';
}

PriorField load_prior_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open prior file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_prior_field(ss.str());
}

}  // namespace qspace
