#ifndef SAFESWITCH_MODEL_IO_HPP
#define SAFESWITCH_MODEL_IO_HPP

// Text model files:
//
//   lqg-model v1
//   matrix A 2 2
//   0.5 0.1
//   0 0.3
//   matrix B 2 1
//   ...
//
// Names come from {A,B,C,W,V,Q,R,A0,B0,L0,K0,A1,B1,L1,K1}. The plant
// matrices are required; a controller (suffix 0 = fallback, 1 = primary) is
// either fully present or absent. Values are written in shortest
// round-trip form so save/load is bit-exact. Blank lines and lines starting
// with '#' are ignored.

#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "safeswitch/model.hpp"

namespace safeswitch {

inline constexpr std::string_view kModelHeader = "lqg-model v1";

struct ModelFile {
  SystemModel sys;
  std::optional<DynamicController> primary;
  std::optional<DynamicController> fallback;
};

/// Shortest decimal that parses back to exactly `x`.
inline std::string format_shortest(double x) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

inline void write_matrix_block(std::ostream& os, std::string_view keyword,
                               std::string_view name, const Matrix& m) {
  os << keyword << ' ' << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << format_shortest(m(i, j));
    }
    os << '\n';
  }
}

inline void write_model(std::ostream& os, const ModelFile& mf) {
  os << kModelHeader << '\n';
  const auto& s = mf.sys;
  write_matrix_block(os, "matrix", "A", s.A);
  write_matrix_block(os, "matrix", "B", s.B);
  write_matrix_block(os, "matrix", "C", s.C);
  write_matrix_block(os, "matrix", "W", s.W);
  write_matrix_block(os, "matrix", "V", s.V);
  write_matrix_block(os, "matrix", "Q", s.Q);
  write_matrix_block(os, "matrix", "R", s.R);
  if (mf.fallback) {
    write_matrix_block(os, "matrix", "A0", mf.fallback->Ac);
    write_matrix_block(os, "matrix", "B0", mf.fallback->Bc);
    write_matrix_block(os, "matrix", "L0", mf.fallback->Lc);
    write_matrix_block(os, "matrix", "K0", mf.fallback->Kc);
  }
  if (mf.primary) {
    write_matrix_block(os, "matrix", "A1", mf.primary->Ac);
    write_matrix_block(os, "matrix", "B1", mf.primary->Bc);
    write_matrix_block(os, "matrix", "L1", mf.primary->Lc);
    write_matrix_block(os, "matrix", "K1", mf.primary->Kc);
  }
}

inline void save_model(const std::string& path, const ModelFile& mf) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_model(os, mf);
  if (!os) throw Error("failed writing '" + path + "'");
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' ||
                               line[i] == '\r'))
      ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' &&
           line[j] != '\r')
      ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool blank_or_comment(std::string_view line) {
  const auto tok = split_ws(line);
  return tok.empty() || tok.front().front() == '#';
}

template <typename T>
T parse_number(std::string_view tok, int line, std::string_view what) {
  T v{};
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ParseError("invalid " + std::string(what) + " '" +
                         std::string(tok) + "'",
                     line);
  }
  return v;
}

}  // namespace detail

inline ModelFile read_model(std::istream& is) {
  static const std::array<std::string_view, 15> kNames = {
      "A", "B", "C", "W", "V", "Q", "R", "A0",
      "B0", "L0", "K0", "A1", "B1", "L1", "K1"};
  std::map<std::string, Matrix, std::less<>> mats;
  std::string line;
  int lineno = 0;

  auto next_content_line = [&](std::string& out) {
    while (std::getline(is, out)) {
      ++lineno;
      if (!detail::blank_or_comment(out)) return true;
    }
    return false;
  };

  if (!next_content_line(line) ||
      detail::split_ws(line) !=
          std::vector<std::string_view>{"lqg-model", "v1"}) {
    throw ParseError("expected header '" + std::string(kModelHeader) + "'",
                     lineno);
  }
  while (next_content_line(line)) {
    const auto tok = detail::split_ws(line);
    if (tok.size() != 4 || tok[0] != "matrix") {
      throw ParseError("expected 'matrix <NAME> <rows> <cols>'", lineno);
    }
    const std::string name(tok[1]);
    bool known = false;
    for (auto k : kNames) known = known || k == name;
    if (!known) throw ParseError("unknown matrix name '" + name + "'", lineno);
    if (mats.count(name)) {
      throw ParseError("duplicate matrix '" + name + "'", lineno);
    }
    const long rows = detail::parse_number<long>(tok[2], lineno, "row count");
    const long cols =
        detail::parse_number<long>(tok[3], lineno, "column count");
    if (rows < 0 || cols < 0) {
      throw ParseError("negative dimension for '" + name + "'", lineno);
    }
    Matrix m(rows, cols);
    for (long i = 0; i < rows; ++i) {
      if (!next_content_line(line)) {
        throw ParseError("unexpected end of file in matrix '" + name + "'",
                         lineno);
      }
      const auto vals = detail::split_ws(line);
      if (static_cast<long>(vals.size()) != cols) {
        throw ParseError("matrix '" + name + "' row " + std::to_string(i) +
                             " has " + std::to_string(vals.size()) +
                             " entries, expected " + std::to_string(cols),
                         lineno);
      }
      for (long j = 0; j < cols; ++j) {
        m(i, j) = detail::parse_number<double>(vals[j], lineno,
                                               "entry of " + name);
      }
    }
    mats.emplace(name, std::move(m));
  }

  auto take = [&](const char* name) -> Matrix {
    auto it = mats.find(name);
    if (it == mats.end()) {
      throw ParseError(std::string("missing field \"") + name + "\"", 0);
    }
    return it->second;
  };

  ModelFile mf;
  mf.sys = {take("A"), take("B"), take("C"), take("W"),
            take("V"), take("Q"), take("R")};
  mf.sys.validate();

  auto controller = [&](char suffix, ControllerRole role,
                        const char* label) -> std::optional<DynamicController> {
    const std::string s(1, suffix);
    const std::array<std::string, 4> names = {"A" + s, "B" + s, "L" + s,
                                              "K" + s};
    int present = 0;
    for (const auto& n : names) present += mats.count(n) ? 1 : 0;
    if (present == 0) return std::nullopt;
    DynamicController c{take(names[0].c_str()), take(names[1].c_str()),
                        take(names[2].c_str()), take(names[3].c_str()), role};
    c.validate_against(mf.sys, label);
    return c;
  };
  mf.fallback = controller('0', ControllerRole::kFallback, "fallback");
  mf.primary = controller('1', ControllerRole::kPrimary, "primary");
  return mf;
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open model file '" + path + "'");
  return read_model(is);
}

}  // namespace safeswitch

#endif  // SAFESWITCH_MODEL_IO_HPP
