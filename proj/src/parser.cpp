#include "stlgrad/parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace stlgrad {

namespace {

std::string position_prefix(SourceSpan span) {
  return "offset " + std::to_string(span.start) + ": ";
}

std::string join_expected(const std::vector<std::string> &expected) {
  std::string out;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i)
      out += i + 1 == expected.size() ? " or " : ", ";
    out += expected[i];
  }
  return out;
}

} // namespace

ParseError::ParseError(SourceSpan span, std::string message,
                       std::vector<std::string> expected)
    : Error(position_prefix(span) + message), span_(span),
      message_(std::move(message)), expected_(std::move(expected)) {}

Region Region::box(std::vector<std::size_t> indices, std::vector<double> lo,
                   std::vector<double> hi) {
  Region r;
  r.kind = Kind::Box;
  r.indices = std::move(indices);
  r.lo = std::move(lo);
  r.hi = std::move(hi);
  return r;
}

Region Region::ball(std::vector<std::size_t> indices,
                    std::vector<double> center, double radius) {
  Region r;
  r.kind = Kind::Ball;
  r.indices = std::move(indices);
  r.center = std::move(center);
  r.radius = radius;
  return r;
}

Predicate Region::predicate() const {
  if (kind == Kind::Box)
    return {mu::BoxMargin{indices, lo, hi}, Comparison::Greater, {0.0, {}}};
  return {mu::Norm{indices, center}, Comparison::Less, {radius, {}}};
}

std::string format_number(double v) {
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok {
  End,
  Ident,
  Number,
  LParen,
  RParen,
  LBracket,
  RBracket,
  Comma,
  Semicolon,
  Colon,
  Star,
  Plus,
  Minus,
  Slash,
  Gt,
  Ge,
  Lt,
  Le,
  Arrow,
  // keywords and their symbol aliases
  Not,
  And,
  Or,
  Always,
  Eventually,
  Until,
  Integral,
  True,
  Inside,
  Inf,
};

struct Token {
  Tok kind;
  SourceSpan span;
  std::string_view text;
  double number = 0.0;
};

std::string describe(Tok t) {
  switch (t) {
  case Tok::End:
    return "end of input";
  case Tok::Ident:
    return "name";
  case Tok::Number:
    return "number";
  case Tok::LParen:
    return "'('";
  case Tok::RParen:
    return "')'";
  case Tok::LBracket:
    return "'['";
  case Tok::RBracket:
    return "']'";
  case Tok::Comma:
    return "','";
  case Tok::Semicolon:
    return "';'";
  case Tok::Colon:
    return "':'";
  case Tok::Star:
    return "'*'";
  case Tok::Plus:
    return "'+'";
  case Tok::Minus:
    return "'-'";
  case Tok::Slash:
    return "'/'";
  case Tok::Gt:
    return "'>'";
  case Tok::Ge:
    return "'>='";
  case Tok::Lt:
    return "'<'";
  case Tok::Le:
    return "'<='";
  case Tok::Arrow:
    return "'->'";
  case Tok::Not:
    return "'not'";
  case Tok::And:
    return "'and'";
  case Tok::Or:
    return "'or'";
  case Tok::Always:
    return "'always'";
  case Tok::Eventually:
    return "'eventually'";
  case Tok::Until:
    return "'until'";
  case Tok::Integral:
    return "'integral'";
  case Tok::True:
    return "'true'";
  case Tok::Inside:
    return "'inside'";
  case Tok::Inf:
    return "'inf'";
  }
  return "token";
}

struct Symbol {
  std::string_view text;
  Tok kind;
};

// Longest match first within each leading byte.
constexpr std::array kSymbols{
    Symbol{"->", Tok::Arrow},      Symbol{"=>", Tok::Arrow},
    Symbol{">=", Tok::Ge},         Symbol{"<=", Tok::Le},
    Symbol{"&&", Tok::And},        Symbol{"||", Tok::Or},
    Symbol{"(", Tok::LParen},      Symbol{")", Tok::RParen},
    Symbol{"[", Tok::LBracket},    Symbol{"]", Tok::RBracket},
    Symbol{",", Tok::Comma},       Symbol{";", Tok::Semicolon},
    Symbol{":", Tok::Colon},       Symbol{"*", Tok::Star},
    Symbol{"+", Tok::Plus},        Symbol{"-", Tok::Minus},
    Symbol{"/", Tok::Slash},       Symbol{">", Tok::Gt},
    Symbol{"<", Tok::Lt},          Symbol{"!", Tok::Not},
    Symbol{"&", Tok::And},         Symbol{"|", Tok::Or},
    Symbol{"¬", Tok::Not},    Symbol{"∧", Tok::And},
    Symbol{"∨", Tok::Or},     Symbol{"→", Tok::Arrow},
    Symbol{"⇒", Tok::Arrow},  Symbol{"□", Tok::Always},
    Symbol{"◻", Tok::Always}, Symbol{"◇", Tok::Eventually},
    Symbol{"◊", Tok::Eventually}, Symbol{"⊤", Tok::True},
    Symbol{"∞", Tok::Inf},    Symbol{"∫", Tok::Integral},
    Symbol{"≥", Tok::Ge},     Symbol{"≤", Tok::Le},
    Symbol{"\U0001d4b0", Tok::Until},
};

constexpr std::array kKeywords{
    Symbol{"not", Tok::Not},
    Symbol{"and", Tok::And},
    Symbol{"or", Tok::Or},
    Symbol{"implies", Tok::Arrow},
    Symbol{"always", Tok::Always},
    Symbol{"eventually", Tok::Eventually},
    Symbol{"until", Tok::Until},
    Symbol{"U", Tok::Until},
    Symbol{"integral", Tok::Integral},
    Symbol{"true", Tok::True},
    Symbol{"inside", Tok::Inside},
    Symbol{"inf", Tok::Inf},
};

bool ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::vector<Token> lex(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < text.size() &&
         std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
      double v = 0.0;
      auto [ptr, ec] =
          std::from_chars(text.data() + i, text.data() + text.size(), v);
      const std::size_t end = static_cast<std::size_t>(ptr - text.data());
      if (ec != std::errc() || (end < text.size() && ident_start(text[end])))
        throw ParseError({i, std::max(end, i + 1)}, "malformed number");
      out.push_back({Tok::Number, {i, end}, text.substr(i, end - i), v});
      i = end;
      continue;
    }
    if (ident_start(c)) {
      std::size_t end = i + 1;
      while (end < text.size() && ident_char(text[end]))
        ++end;
      const std::string_view word = text.substr(i, end - i);
      Tok kind = Tok::Ident;
      for (const auto &k : kKeywords)
        if (k.text == word)
          kind = k.kind;
      out.push_back({kind, {i, end}, word});
      i = end;
      continue;
    }
    bool matched = false;
    for (const auto &s : kSymbols) {
      if (text.substr(i, s.text.size()) == s.text) {
        out.push_back({s.kind, {i, i + s.text.size()}, s.text});
        i += s.text.size();
        matched = true;
        break;
      }
    }
    if (!matched) {
      std::size_t end = i + 1;
      while (end < text.size() && (static_cast<unsigned char>(text[end]) & 0xC0) == 0x80)
        ++end;
      throw ParseError({i, end}, "unexpected character '" +
                                     std::string(text.substr(i, end - i)) + "'");
    }
  }
  out.push_back({Tok::End, {text.size(), text.size()}, {}});
  return out;
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
public:
  Parser(std::string_view text, const ParserConfig &cfg)
      : cfg_(cfg), toks_(lex(text)) {}

  Formula run() {
    if (peek().kind == Tok::End)
      throw ParseError(peek().span, "empty formula", {"formula"});
    Formula f = until();
    if (peek().kind != Tok::End)
      fail({"end of input", "'and'", "'or'", "'->'", "'until'"});
    return f;
  }

private:
  const Token &peek(std::size_t k = 0) const {
    return toks_[std::min(pos_ + k, toks_.size() - 1)];
  }
  const Token &next() {
    const Token &t = toks_[pos_];
    if (pos_ + 1 < toks_.size())
      ++pos_;
    return t;
  }
  bool accept(Tok k) {
    if (peek().kind != k)
      return false;
    next();
    return true;
  }
  const Token &expect(Tok k) {
    if (peek().kind != k)
      fail({describe(k)});
    return next();
  }

  [[noreturn]] void fail(std::vector<std::string> expected) const {
    const Token &t = peek();
    std::string msg = "expected " + join_expected(expected);
    msg += t.kind == Tok::End ? " at end of input"
                              : ", found '" + std::string(t.text) + "'";
    throw ParseError(t.span, msg, std::move(expected));
  }

  std::size_t prev_end() const { return toks_[pos_ == 0 ? 0 : pos_ - 1].span.end; }

  Formula spanned(Formula f, std::size_t start) const {
    return f.with_span({start, prev_end()});
  }

  template <class Fn> auto guarded(SourceSpan span, Fn &&fn) {
    try {
      return fn();
    } catch (const InvalidArgument &e) {
      throw ParseError(span, e.what());
    }
  }

  Formula until() {
    const std::size_t start = peek().span.start;
    Formula lhs = implies();
    if (peek().kind != Tok::Until)
      return lhs;
    const SourceSpan op = next().span;
    Interval iv;
    if (peek().kind == Tok::LBracket)
      iv = interval();
    Formula rhs = until();
    return spanned(guarded(op, [&] { return Formula::until(lhs, rhs, iv); }),
                   start);
  }

  Formula implies() {
    const std::size_t start = peek().span.start;
    Formula lhs = disjunction();
    if (!accept(Tok::Arrow))
      return lhs;
    Formula rhs = implies();
    return spanned(Formula::implication(lhs, rhs), start);
  }

  Formula disjunction() {
    const std::size_t start = peek().span.start;
    Formula lhs = conjunction();
    while (accept(Tok::Or))
      lhs = spanned(Formula::disjunction(lhs, conjunction()), start);
    return lhs;
  }

  Formula conjunction() {
    const std::size_t start = peek().span.start;
    Formula lhs = unary();
    while (accept(Tok::And))
      lhs = spanned(Formula::conjunction(lhs, unary()), start);
    return lhs;
  }

  Formula unary() {
    const std::size_t start = peek().span.start;
    switch (peek().kind) {
    case Tok::Not:
      next();
      return spanned(Formula::negation(unary()), start);
    case Tok::Always:
    case Tok::Eventually: {
      const bool always = next().kind == Tok::Always;
      Interval iv;
      if (peek().kind == Tok::LBracket)
        iv = interval();
      Formula body = unary();
      return spanned(always ? Formula::always(body, iv)
                            : Formula::eventually(body, iv),
                     start);
    }
    case Tok::Integral:
      return integral();
    default:
      return primary();
    }
  }

  Formula integral() {
    const std::size_t start = next().span.start;
    const std::size_t open = peek().span.start;
    expect(Tok::LBracket);
    const double a = bound(false);
    expect(Tok::Comma);
    const SourceSpan upper = peek().span;
    const double b = bound(true);
    if (std::isinf(b))
      throw ParseError(upper, "integral requires a finite interval", {"number"});
    IntegralWeight w;
    if (accept(Tok::Semicolon))
      w = weight();
    expect(Tok::RBracket);
    const SourceSpan iv_span{open, prev_end()};
    const Interval iv = guarded(iv_span, [&] { return Interval(a, b); });
    Formula body = unary();
    return spanned(
        guarded(iv_span, [&] { return Formula::integral(body, iv, w); }),
        start);
  }

  IntegralWeight weight() {
    IntegralWeight w;
    if (peek().kind == Tok::Number)
      w.scale = next().number;
    else
      fail({"number"});
    if (accept(Tok::Slash)) {
      const Token &t = peek();
      if (t.kind != Tok::Ident || t.text != "dt")
        fail({"'dt'"});
      next();
      w.per_dt = true;
    }
    return w;
  }

  double bound(bool upper) {
    const Token &t = peek();
    if (t.kind == Tok::Number)
      return next().number;
    if (upper && t.kind == Tok::Inf) {
      next();
      return kInfinity;
    }
    if (t.kind == Tok::Ident)
      throw ParseError(t.span, "interval bounds must be numbers; time "
                               "parameters cannot be learned",
                       {"number"});
    fail(upper ? std::vector<std::string>{"number", "'inf'"}
               : std::vector<std::string>{"number"});
  }

  Interval interval() {
    const std::size_t open = peek().span.start;
    expect(Tok::LBracket);
    const double a = bound(false);
    expect(Tok::Comma);
    const double b = bound(true);
    expect(std::isinf(b) ? Tok::RParen : Tok::RBracket);
    return guarded(SourceSpan{open, prev_end()}, [&] { return Interval(a, b); });
  }

  Formula primary() {
    const std::size_t start = peek().span.start;
    switch (peek().kind) {
    case Tok::LParen: {
      next();
      Formula f = until();
      expect(Tok::RParen);
      return f;
    }
    case Tok::True:
      next();
      return spanned(Formula::truth(), start);
    case Tok::Inside: {
      next();
      const Token &name = peek();
      if (name.kind != Tok::Ident)
        fail({"region name"});
      next();
      auto it = cfg_.regions.find(name.text);
      if (it == cfg_.regions.end())
        throw ParseError(name.span,
                         "unknown region '" + std::string(name.text) + "'",
                         {"region name"});
      for (std::size_t k : it->second.indices)
        check_dim(k, name.span);
      return spanned(guarded(name.span,
                             [&] { return Formula::predicate(it->second.predicate()); }),
                     start);
    }
    case Tok::Ident:
    case Tok::Number:
    case Tok::Minus:
    case Tok::Plus:
      return predicate();
    default:
      fail({"formula"});
    }
  }

  Formula predicate() {
    const std::size_t start = peek().span.start;
    Mu m = mu_expr();
    Comparison cmp;
    switch (peek().kind) {
    case Tok::Gt:
      cmp = Comparison::Greater;
      break;
    case Tok::Ge:
      cmp = Comparison::GreaterEq;
      break;
    case Tok::Lt:
      cmp = Comparison::Less;
      break;
    case Tok::Le:
      cmp = Comparison::LessEq;
      break;
    default:
      fail({"'>'", "'>='", "'<'", "'<='"});
    }
    next();
    Threshold th = threshold();
    Predicate p{std::move(m), cmp, std::move(th)};
    const SourceSpan span{start, prev_end()};
    return guarded(span, [&] { return Formula::predicate(p); }).with_span(span);
  }

  Threshold threshold() {
    double sign = 1.0;
    if (accept(Tok::Minus))
      sign = -1.0;
    else
      accept(Tok::Plus);
    const Token &t = peek();
    if (t.kind == Tok::Number) {
      next();
      return {sign * t.number, {}};
    }
    if (t.kind == Tok::Ident && sign > 0) {
      if (variable_index(t.text))
        throw ParseError(t.span,
                         "threshold must be a number or a parameter name",
                         {"number", "parameter name"});
      next();
      std::string name(t.text);
      double init = 0.0;
      if (auto it = cfg_.parameters.find(name); it != cfg_.parameters.end())
        init = it->second;
      return {init, std::move(name)};
    }
    fail(sign > 0 ? std::vector<std::string>{"number", "parameter name"}
                  : std::vector<std::string>{"number"});
  }

  std::optional<std::size_t> variable_index(std::string_view name) const {
    if (auto it = cfg_.aliases.find(name); it != cfg_.aliases.end())
      return it->second;
    if (name.size() >= 2 && name[0] == 'x' &&
        std::all_of(name.begin() + 1, name.end(),
                    [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      std::size_t k = 0;
      auto [p, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), k);
      if (ec == std::errc() && p == name.data() + name.size())
        return k;
    }
    return std::nullopt;
  }

  void check_dim(std::size_t k, SourceSpan span) const {
    if (cfg_.dim && k >= *cfg_.dim)
      throw ParseError(span, "variable x" + std::to_string(k) +
                                 " exceeds the signal dimension " +
                                 std::to_string(*cfg_.dim));
  }

  std::size_t variable() {
    const Token &t = peek();
    if (t.kind != Tok::Ident)
      fail({"variable"});
    auto k = variable_index(t.text);
    if (!k)
      throw ParseError(t.span, "unknown variable '" + std::string(t.text) + "'",
                       {"variable"});
    check_dim(*k, t.span);
    next();
    return *k;
  }

  double signed_number() {
    double sign = 1.0;
    if (accept(Tok::Minus))
      sign = -1.0;
    const Token &t = peek();
    if (t.kind != Tok::Number)
      fail({"number"});
    next();
    return sign * t.number;
  }

  // Optional "+ r" / "- r" after a variable inside abs(...) and norm(...).
  double offset_reference() {
    if (accept(Tok::Minus))
      return expect_number();
    if (accept(Tok::Plus))
      return -expect_number();
    return 0.0;
  }

  double expect_number() {
    const Token &t = peek();
    if (t.kind != Tok::Number)
      fail({"number"});
    next();
    return t.number;
  }

  Mu mu_expr() {
    const Token &t = peek();
    if (t.kind == Tok::Ident && peek(1).kind == Tok::LParen) {
      if (t.text == "abs") {
        next();
        next();
        mu::AbsDeviation d;
        d.index = variable();
        d.reference = offset_reference();
        expect(Tok::RParen);
        return d;
      }
      if (t.text == "norm") {
        next();
        next();
        mu::Norm n;
        do {
          n.indices.push_back(variable());
          n.center.push_back(offset_reference());
        } while (accept(Tok::Comma));
        expect(Tok::RParen);
        return n;
      }
      if (t.text == "box") {
        next();
        next();
        mu::BoxMargin b;
        do {
          b.indices.push_back(variable());
          expect(Tok::Colon);
          expect(Tok::LBracket);
          b.lo.push_back(signed_number());
          expect(Tok::Comma);
          b.hi.push_back(signed_number());
          expect(Tok::RBracket);
        } while (accept(Tok::Comma));
        expect(Tok::RParen);
        return b;
      }
      throw ParseError(t.span, "unknown function '" + std::string(t.text) + "'",
                       {"'abs'", "'norm'", "'box'", "variable"});
    }
    // Bare variable.
    if (t.kind == Tok::Ident && !is_linear_continuation(peek(1).kind))
      return mu::Coordinate{variable()};
    return affine();
  }

  static bool is_linear_continuation(Tok k) {
    return k == Tok::Star || k == Tok::Plus || k == Tok::Minus;
  }

  mu::Affine affine() {
    mu::Affine a;
    const SourceSpan start = peek().span;
    bool first = true;
    for (;;) {
      double sign = 1.0;
      if (accept(Tok::Minus))
        sign = -1.0;
      else if (!accept(Tok::Plus) && !first)
        break;
      first = false;
      const Token &t = peek();
      if (t.kind == Tok::Number) {
        next();
        if (accept(Tok::Star)) {
          a.coeffs.push_back(sign * t.number);
          a.indices.push_back(variable());
        } else {
          a.offset += sign * t.number;
        }
      } else if (t.kind == Tok::Ident) {
        a.indices.push_back(variable());
        double c = sign;
        if (accept(Tok::Star))
          c *= signed_number();
        a.coeffs.push_back(c);
      } else {
        fail({"number", "variable"});
      }
      if (peek().kind != Tok::Plus && peek().kind != Tok::Minus)
        break;
    }
    if (a.indices.empty())
      throw ParseError({start.start, prev_end()},
                       "predicate needs a signal variable", {"variable"});
    return a;
  }

  const ParserConfig &cfg_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

} // namespace

Formula parse(std::string_view text, const ParserConfig &cfg) {
  return Parser(text, cfg).run();
}

Formula parse(std::string_view text, std::size_t dim) {
  ParserConfig cfg;
  cfg.dim = dim;
  return parse(text, cfg);
}

// ---------------------------------------------------------------------------
// Unparse

namespace {

std::string var(std::size_t k) { return "x" + std::to_string(k); }

// "x0 - 1", "x0 + 1", "x0"
std::string deviation(std::size_t k, double ref) {
  if (ref == 0.0 && !std::signbit(ref))
    return var(k);
  if (std::signbit(ref))
    return var(k) + " + " + format_number(-ref);
  return var(k) + " - " + format_number(ref);
}

std::string mu_text(const Mu &m) {
  struct V {
    std::string operator()(const mu::Coordinate &c) const { return var(c.index); }
    std::string operator()(const mu::Affine &a) const {
      std::string out;
      for (std::size_t j = 0; j < a.indices.size(); ++j) {
        const double c = a.coeffs[j];
        const std::string term = format_number(std::abs(c)) + "*" + var(a.indices[j]);
        if (j == 0)
          out += std::signbit(c) ? "-" + term : term;
        else
          out += (std::signbit(c) ? " - " : " + ") + term;
      }
      if (a.offset != 0.0)
        out += (a.offset < 0 ? " - " : " + ") + format_number(std::abs(a.offset));
      return out;
    }
    std::string operator()(const mu::Norm &n) const {
      std::string out = "norm(";
      for (std::size_t j = 0; j < n.indices.size(); ++j) {
        if (j)
          out += ", ";
        out += deviation(n.indices[j], n.center[j]);
      }
      return out + ")";
    }
    std::string operator()(const mu::AbsDeviation &d) const {
      return "abs(" + deviation(d.index, d.reference) + ")";
    }
    std::string operator()(const mu::BoxMargin &b) const {
      std::string out = "box(";
      for (std::size_t j = 0; j < b.indices.size(); ++j) {
        if (j)
          out += ", ";
        out += var(b.indices[j]) + ":[" + format_number(b.lo[j]) + ", " +
               format_number(b.hi[j]) + "]";
      }
      return out + ")";
    }
  };
  return std::visit(V{}, m);
}

std::string_view cmp_text(Comparison c) {
  switch (c) {
  case Comparison::Greater:
    return ">";
  case Comparison::GreaterEq:
    return ">=";
  case Comparison::Less:
    return "<";
  case Comparison::LessEq:
    return "<=";
  }
  return ">";
}

std::string interval_text(const Interval &iv) {
  if (iv.is_positive_ray())
    return "";
  if (!iv.bounded())
    return "[" + format_number(iv.lower()) + ",inf)";
  return "[" + format_number(iv.lower()) + "," + format_number(iv.upper()) + "]";
}

std::string weight_text(const IntegralWeight &w) {
  if (w.scale == 1.0 && !w.per_dt)
    return "";
  return "; " + format_number(w.scale) + (w.per_dt ? "/dt" : "");
}

std::string paren(const Formula &f) { return "(" + unparse(f) + ")"; }

} // namespace

std::string unparse(const Predicate &p) {
  std::string out = mu_text(p.mu);
  out += " ";
  out += cmp_text(p.comparison);
  out += " ";
  out += p.threshold.parameter ? *p.threshold.parameter
                               : format_number(p.threshold.value);
  return out;
}

std::string unparse(const Formula &f) {
  switch (f.op()) {
  case Op::True:
    return "true";
  case Op::Pred:
    return unparse(f.predicate());
  case Op::Not:
    return "not " + paren(f.child(0));
  case Op::And:
    return paren(f.child(0)) + " and " + paren(f.child(1));
  case Op::Or:
    return paren(f.child(0)) + " or " + paren(f.child(1));
  case Op::Implies:
    return paren(f.child(0)) + " -> " + paren(f.child(1));
  case Op::Eventually:
    return "eventually" + interval_text(f.interval()) + " " + paren(f.child(0));
  case Op::Always:
    return "always" + interval_text(f.interval()) + " " + paren(f.child(0));
  case Op::Integral: {
    const Interval &iv = f.interval();
    return "integral[" + format_number(iv.lower()) + "," +
           format_number(iv.upper()) + weight_text(f.weight()) + "] " +
           paren(f.child(0));
  }
  case Op::Until:
    return paren(f.child(0)) + " until" + interval_text(f.interval()) + " " +
           paren(f.child(1));
  }
  return "";
}

// ---------------------------------------------------------------------------
// DOT

namespace {

std::string dot_escape(const std::string &s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\')
      out += '\\';
    out += c;
  }
  return out;
}

class DotWriter {
public:
  std::string run(const Formula &f) {
    emit(f);
    std::ostringstream os;
    os << "digraph stl {\n  rankdir=BT;\n";
    os << nodes_.str() << edges_.str() << "}\n";
    return os.str();
  }

private:
  std::string node(const std::string &label, const char *cls) {
    const std::string id = "n" + std::to_string(next_++);
    const char *color = cls[0] == 'i'   ? "lightblue"
                        : cls[0] == 'p' ? "palegreen"
                                        : "orange";
    const char *shape = cls[0] == 'o' ? "ellipse" : "box";
    nodes_ << "  " << id << " [label=\"" << dot_escape(label) << "\", class=\""
           << cls << "\", shape=" << shape << ", style=filled, fillcolor=\""
           << color << "\"];\n";
    return id;
  }
  void edge(const std::string &from, const std::string &to) {
    edges_ << "  " << from << " -> " << to << ";\n";
  }

  std::string emit(const Formula &f) {
    if (f.op() == Op::Pred) {
      const Predicate &p = f.predicate();
      const std::string op = node(std::string(cmp_text(p.comparison)), "operator");
      edge(node(mu_text(p.mu), "input"), op);
      edge(node(p.threshold.parameter ? *p.threshold.parameter
                                      : format_number(p.threshold.value),
                "parameter"),
           op);
      return op;
    }
    std::string label;
    switch (f.op()) {
    case Op::True:
      label = "⊤";
      break;
    case Op::Not:
      label = "¬";
      break;
    case Op::And:
      label = "∧";
      break;
    case Op::Or:
      label = "∨";
      break;
    case Op::Implies:
      label = "→";
      break;
    case Op::Eventually:
      label = "◊" + interval_label(f.interval());
      break;
    case Op::Always:
      label = "□" + interval_label(f.interval());
      break;
    case Op::Integral:
      label = "∫" + interval_label(f.interval());
      break;
    case Op::Until:
      label = "U" + interval_label(f.interval());
      break;
    case Op::Pred:
      break;
    }
    std::vector<std::string> kids;
    for (std::size_t i = 0; i < f.arity(); ++i)
      kids.push_back(emit(f.child(i)));
    const std::string id = node(label, "operator");
    for (const auto &k : kids)
      edge(k, id);
    return id;
  }

  static std::string interval_label(const Interval &iv) {
    if (!iv.bounded())
      return "[" + format_number(iv.lower()) + ",∞)";
    return "[" + format_number(iv.lower()) + "," + format_number(iv.upper()) + "]";
  }

  std::ostringstream nodes_, edges_;
  std::size_t next_ = 0;
};

} // namespace

std::string to_dot(const Formula &f) { return DotWriter().run(f); }

} // namespace stlgrad
