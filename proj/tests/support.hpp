#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <unistd.h>

#include "softs/data.hpp"
#include "softs/rng.hpp"
#include "softs/tensor.hpp"

namespace softs::test {

template <typename T>
BasicTensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(shape);
  Rng rng(seed);
  for (T& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Per-test scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("softs_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// A few coupled sinusoids with noise: channel c lags channel 0 by c steps.
inline std::string synthetic_csv(std::size_t rows, std::size_t channels, std::uint64_t seed = 7) {
  Rng rng(seed);
  std::ostringstream out;
  out << "date";
  for (std::size_t c = 0; c < channels; ++c) out << ",ch" << c;
  out << '\n';
  for (std::size_t t = 0; t < rows; ++t) {
    out << "2020-01-01 " << t;
    for (std::size_t c = 0; c < channels; ++c) {
      const double phase = static_cast<double>(t + c) / 6.0;
      out << ',' << 10.0 * c + std::sin(phase) + 0.5 * std::cos(phase / 3.0) +
                        0.05 * rng.uniform(-1, 1);
    }
    out << '\n';
  }
  return out.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace softs::test
