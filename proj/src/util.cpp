#include "aes/util.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <sstream>

#include "aes/error.hpp"

namespace aes {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::MalformedRow: return "malformed_row";
    case ErrorCode::UnknownPrompt: return "unknown_prompt";
    case ErrorCode::ScoreOutOfRange: return "score_out_of_range";
    case ErrorCode::EmptyInput: return "empty_input";
    case ErrorCode::ValueOutOfRange: return "value_out_of_range";
    case ErrorCode::EmptyCorpus: return "empty_corpus";
    case ErrorCode::InvalidLength: return "invalid_length";
    case ErrorCode::IndexOutOfBounds: return "index_out_of_bounds";
    case ErrorCode::ShapeMismatch: return "shape_mismatch";
    case ErrorCode::NonFiniteActivation: return "non_finite_activation";
    case ErrorCode::MissingCache: return "missing_cache";
    case ErrorCode::UnknownGenre: return "unknown_genre";
    case ErrorCode::EmptyEssay: return "empty_essay";
    case ErrorCode::DivergedLoss: return "diverged_loss";
    case ErrorCode::CorruptCheckpoint: return "corrupt_checkpoint";
    case ErrorCode::VersionMismatch: return "version_mismatch";
    case ErrorCode::EmptySet: return "empty_set";
    case ErrorCode::TemplateMismatch: return "template_mismatch";
    case ErrorCode::Timeout: return "llm_timeout";
    case ErrorCode::RemoteError: return "llm_remote_error";
    case ErrorCode::MalformedReply: return "llm_malformed_reply";
    case ErrorCode::InvalidConfig: return "invalid_config";
    case ErrorCode::Io: return "io_error";
  }
  return "unknown";
}

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw Error(ErrorCode::Io, "sha256 failed");
  }
  std::ostringstream out;
  out << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) out << std::setw(2) << static_cast<int>(digest[i]);
  return out.str();
}

std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path);
}

std::string trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "Rng::below(0)");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace aes
