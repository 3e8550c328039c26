#pragma once

#include <string_view>
#include <vector>

namespace stlgrad::testing {

// Inputs the parser must reject with a ParseError.
inline const std::vector<std::string_view> &malformed_formulas() {
  static const std::vector<std::string_view> corpus = {
      "",
      "   ",
      "x0 >",
      "x0",
      "> 1",
      "x0 > 1 and",
      "and x0 > 1",
      "x0 > 1 or or x0 < 2",
      "(x0 > 1",
      "x0 > 1)",
      "((x0 > 1)",
      "not",
      "always",
      "always[0,1]",
      "always[0,] x0 > 1",
      "always[,1] x0 > 1",
      "always[0 1] x0 > 1",
      "always[2,1] x0 > 1",
      "always[-1,1] x0 > 1",
      "always[0,inf] x0 > 1",
      "always[a,b] x0 > 1",
      "always[0,1 x0 > 1",
      "eventually[inf,inf) x0 > 0",
      "x0 > 1 until",
      "x0 > 1 until[0,1]",
      "until x0 > 1",
      "integral[0,inf) x0 > 0",
      "integral[0,2;] x0 > 0",
      "integral[0,2;1/t] x0 > 0",
      "integral x0 > 0",
      "x9 > 1",
      "y > 1",
      "x0 >> 1",
      "x0 > 1 $ x0 < 2",
      "x0 > 1e",
      "x0 > 2x",
      "x0 > -eps",
      "x0 > x1",
      "abs(x0 > 1",
      "abs() > 1",
      "abs(x0 - ) > 1",
      "norm(x0, ) < 1",
      "box(x0:[0,1) > 0",
      "box(x0:[1,0]) > 0",
      "box(x0) > 0",
      "foo(x0) > 1",
      "inside",
      "inside nowhere",
      "2 > 1",
      "2*3 > 1",
      "x0 * > 1",
      "x0 > 1 ->",
      "-> x0 > 1",
      "x0 > 1 x0 < 2",
      "true true",
      "()",
      "\xe2\x96\xa1",
      "x0 \xe2\x89\xa5",
      "x0 > 1 \xff",
  };
  return corpus;
}

} // namespace stlgrad::testing
