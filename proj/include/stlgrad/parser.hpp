#pragma once

// Text syntax for formulas.
//
//   formula   = until ;
//   until     = implies [ "until" [ interval ] until ] ;
//   implies   = or [ "->" implies ] ;
//   or        = and { "or" and } ;
//   and       = unary { "and" unary } ;
//   unary     = "not" unary
//             | ( "always" | "eventually" ) [ interval ] unary
//             | "integral" "[" number "," number [ ";" weight ] "]" unary
//             | primary ;
//   primary   = "(" formula ")" | "true" | "inside" name | mu cmp threshold ;
//
// See README.md for the full grammar, including mu expressions.

#include "stlgrad/core.hpp"

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace stlgrad {

class ParseError : public Error {
public:
  ParseError(SourceSpan span, std::string message,
             std::vector<std::string> expected = {});

  const SourceSpan &span() const { return span_; }
  /// Diagnostic without the position prefix.
  const std::string &message() const { return message_; }
  const std::vector<std::string> &expected() const { return expected_; }

private:
  SourceSpan span_;
  std::string message_;
  std::vector<std::string> expected_;
};

/// Named region usable as `inside NAME`: an axis-aligned box or a disk.
struct Region {
  enum class Kind { Box, Ball };
  Kind kind = Kind::Box;
  std::vector<std::size_t> indices;
  std::vector<double> lo, hi; // box
  std::vector<double> center; // ball
  double radius = 0.0;

  static Region box(std::vector<std::size_t> indices, std::vector<double> lo,
                    std::vector<double> hi);
  static Region ball(std::vector<std::size_t> indices,
                     std::vector<double> center, double radius);
  /// The predicate `inside` expands to.
  Predicate predicate() const;
};

struct ParserConfig {
  /// Signal dimension; variables x_k with k >= dim are rejected when set.
  std::optional<std::size_t> dim;
  /// Extra variable names mapped to state coordinates.
  std::map<std::string, std::size_t, std::less<>> aliases;
  std::map<std::string, Region, std::less<>> regions;
  /// Initial values of learnable thresholds (default 0).
  std::map<std::string, double, std::less<>> parameters;
};

Formula parse(std::string_view text, const ParserConfig &cfg = {});
Formula parse(std::string_view text, std::size_t dim);

/// Canonical text; parse(unparse(f)) is structurally equal to f.
std::string unparse(const Formula &f);
std::string unparse(const Predicate &p);

/// Computation graph in DOT. Edges run from inputs towards the root; nodes
/// carry class="input", "parameter" or "operator".
std::string to_dot(const Formula &f);

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

} // namespace stlgrad
