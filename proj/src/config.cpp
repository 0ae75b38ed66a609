#include "mshmm/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "mshmm/errors.hpp"

namespace mshmm {

namespace {

std::string number_text(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::optional<double> to_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto r = std::from_chars(first, s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

// ---------------------------------------------------------------- tokens

enum class Tok { ident, number, punct, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  int column = 0;  // 1-based
};

std::vector<Token> tokenize(const std::string& s, int line, int offset) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    const int col = offset + static_cast<int>(i) + 1;
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < s.size() && is_ident_char(s[j])) ++j;
      out.push_back({Tok::ident, s.substr(i, j - i), col});
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '.') {
      std::size_t j = i + 1;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '.' ||
                              ((s[j] == '-' || s[j] == '+') && (s[j - 1] == 'e' || s[j - 1] == 'E')))) {
        ++j;
      }
      const std::string text = s.substr(i, j - i);
      if (!to_number(text)) throw ConfigError(line, col, "malformed number '" + text + "'");
      out.push_back({Tok::number, text, col});
      i = j;
    } else if (std::string("()[],=+").find(c) != std::string::npos) {
      out.push_back({Tok::punct, std::string(1, c), col});
      ++i;
    } else {
      throw ConfigError(line, col, std::string("unexpected character '") + c + "'");
    }
  }
  out.push_back({Tok::end, "", offset + static_cast<int>(s.size()) + 1});
  return out;
}

class Cursor {
 public:
  Cursor(std::vector<Token> toks, int line) : toks_(std::move(toks)), line_(line) {}
  const Token& peek() const { return toks_[pos_]; }
  Token next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool accept(const std::string& p) {
    if (peek().kind == Tok::punct && peek().text == p) {
      ++pos_;
      return true;
    }
    return false;
  }
  Token expect(const std::string& p) {
    if (!accept(p)) fail(peek(), "expected '" + p + "'");
    return toks_[pos_ - 1];
  }
  Token expect_ident(const std::string& what) {
    if (peek().kind != Tok::ident) fail(peek(), "expected " + what);
    return next();
  }
  [[noreturn]] void fail(const Token& t, const std::string& msg) const {
    const std::string got = t.kind == Tok::end ? "end of line" : "'" + t.text + "'";
    throw ConfigError(line_, t.column, msg + ", found " + got);
  }
  int line() const { return line_; }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int line_;
};

// ---------------------------------------------------------------- formulas

struct ArgValue {
  std::vector<Token> items;  // one for a scalar, several for a tuple
  bool tuple = false;
};

ArgValue parse_value(Cursor& c) {
  ArgValue v;
  if (c.accept("(")) {
    v.tuple = true;
    do {
      const Token t = c.next();
      if (t.kind != Tok::ident && t.kind != Tok::number) c.fail(t, "expected a value");
      v.items.push_back(t);
    } while (c.accept(","));
    c.expect(")");
  } else {
    const Token t = c.next();
    if (t.kind != Tok::ident && t.kind != Tok::number) c.fail(t, "expected a value");
    v.items.push_back(t);
  }
  return v;
}

std::optional<BasisKind> basis_from_token(const std::string& s) {
  if (s == "ps" || s == "bs") return BasisKind::bspline;
  if (s == "cc") return BasisKind::cyclic_cubic;
  if (s == "re") return BasisKind::random_effect;
  if (s == "tp") return BasisKind::radial_2d;
  return std::nullopt;
}

FormulaTerm parse_smooth(Cursor& c, const Token& head) {
  TermMode mode = TermMode::simple;
  if (head.text == "te") mode = TermMode::tensor_full;
  if (head.text == "ti") mode = TermMode::tensor_anova_interaction;
  c.expect("(");
  std::vector<Token> vars;
  std::map<std::string, std::pair<Token, ArgValue>> kw;
  do {
    const Token name = c.expect_ident("a covariate or argument name");
    if (c.accept("=")) {
      static const std::set<std::string> keys = {"bs", "k", "period", "d", "m", "degree", "by"};
      if (!keys.count(name.text)) c.fail(name, "unknown argument '" + name.text + "'");
      if (kw.count(name.text)) c.fail(name, "duplicate argument '" + name.text + "'");
      kw.emplace(name.text, std::make_pair(name, parse_value(c)));
    } else {
      if (!kw.empty()) c.fail(name, "covariates must precede named arguments");
      vars.push_back(name);
    }
  } while (c.accept(","));
  c.expect(")");
  if (vars.empty()) c.fail(head, "smooth without covariates");

  auto get = [&](const std::string& key) -> const ArgValue* {
    auto it = kw.find(key);
    return it == kw.end() ? nullptr : &it->second.second;
  };
  auto key_token = [&](const std::string& key) { return kw.at(key).first; };

  // Basis per marginal: dims from d=, else from bs=, else one covariate each.
  std::vector<int> dims;
  const std::size_t n_marg_expected = mode == TermMode::simple ? 1 : 2;
  if (const ArgValue* d = get("d")) {
    for (const Token& t : d->items) {
      const auto v = to_number(t.text);
      if (!v || (*v != 1 && *v != 2)) c.fail(t, "d must be 1 or 2");
      dims.push_back(static_cast<int>(*v));
    }
  }
  std::vector<std::string> bs_names;
  if (const ArgValue* b = get("bs")) {
    for (const Token& t : b->items) {
      if (!basis_from_token(t.text)) c.fail(t, "unknown basis '" + t.text + "'");
      bs_names.push_back(t.text);
    }
  }
  if (dims.empty()) {
    if (mode == TermMode::simple) {
      dims = {static_cast<int>(vars.size())};
    } else if (bs_names.size() == 2) {
      for (const auto& b : bs_names) dims.push_back(*basis_from_token(b) == BasisKind::radial_2d ? 2 : 1);
    } else {
      dims.assign(vars.size(), 1);
    }
  }
  if (dims.size() != n_marg_expected) {
    c.fail(head, head.text + "() needs " + std::to_string(n_marg_expected) + " marginal(s)");
  }
  int total = 0;
  for (int d : dims) total += d;
  if (total != static_cast<int>(vars.size())) {
    c.fail(head, "covariate count does not match the marginal dimensions");
  }
  const std::size_t M = dims.size();
  auto per_marginal = [&](const std::string& key) -> std::vector<std::optional<Token>> {
    std::vector<std::optional<Token>> out(M);
    const ArgValue* v = get(key);
    if (!v) return out;
    if (v->items.size() == 1) {
      out.assign(M, v->items[0]);
    } else if (v->items.size() == M) {
      for (std::size_t m = 0; m < M; ++m) out[m] = v->items[m];
    } else {
      c.fail(key_token(key), "'" + key + "' needs 1 or " + std::to_string(M) + " values");
    }
    return out;
  };
  auto integer = [&](const Token& t, const std::string& what) {
    const auto v = to_number(t.text);
    if (!v || *v != std::floor(*v) || *v < 1) c.fail(t, what + " must be a positive integer");
    return static_cast<int>(*v);
  };
  const auto bs = per_marginal("bs");
  const auto ks = per_marginal("k");
  const auto periods = per_marginal("period");
  const auto ms = per_marginal("m");
  const auto degrees = per_marginal("degree");
  std::vector<MarginalSpec> marginals;
  std::size_t v = 0;
  for (std::size_t m = 0; m < M; ++m) {
    MarginalSpec spec;
    spec.kind = dims[m] == 2 ? BasisKind::radial_2d : BasisKind::bspline;
    if (bs[m]) spec.kind = *basis_from_token(bs[m]->text);
    if ((spec.kind == BasisKind::radial_2d) != (dims[m] == 2)) {
      c.fail(bs[m] ? *bs[m] : head, "basis 'tp' takes two covariates, other bases one");
    }
    for (int k = 0; k < dims[m]; ++k) spec.vars.push_back(vars[v++].text);
    if (ks[m] && ks[m]->text != "NA") spec.k = integer(*ks[m], "k");
    if (periods[m] && periods[m]->text != "NA") {
      const auto p = to_number(periods[m]->text);
      if (!p || !(*p > 0)) c.fail(*periods[m], "period must be a positive number");
      spec.period = *p;
    }
    if (ms[m] && ms[m]->text != "NA") spec.penalty_order = integer(*ms[m], "m");
    if (degrees[m] && degrees[m]->text != "NA") spec.degree = integer(*degrees[m], "degree");
    if (spec.kind == BasisKind::cyclic_cubic && !spec.period) {
      c.fail(head, "cyclic basis for '" + spec.vars[0] + "' needs a period");
    }
    if (spec.period && spec.kind != BasisKind::cyclic_cubic) {
      c.fail(key_token("period"), "period applies to cyclic bases only");
    }
    marginals.push_back(spec);
  }
  std::string by;
  if (const ArgValue* b = get("by")) {
    if (b->tuple || b->items[0].kind != Tok::ident) c.fail(key_token("by"), "by must name a covariate");
    by = b->items[0].text;
  }
  FormulaTerm t;
  t.kind = TermKind::smooth;
  try {
    t.smooth = make_smooth(mode, std::move(marginals), by);
  } catch (const InvalidInput& e) {
    throw ConfigError(c.line(), head.column, e.what());
  }
  return t;
}

}  // namespace

Formula parse_formula(const std::string& text, int line, int column_offset) {
  Cursor c(tokenize(text, line, column_offset), line);
  Formula f;
  bool intercept = false;
  do {
    const Token t = c.next();
    if (t.kind == Tok::number) {
      if (t.text != "1") c.fail(t, "only the intercept '1' may appear as a number");
      intercept = true;
      continue;
    }
    if (t.kind != Tok::ident) c.fail(t, "expected a term");
    if (c.peek().kind == Tok::punct && c.peek().text == "(") {
      if (t.text == "s" || t.text == "te" || t.text == "ti") {
        f.terms.push_back(parse_smooth(c, t));
      } else if (t.text == "factor") {
        c.expect("(");
        FormulaTerm ft;
        ft.kind = TermKind::factor;
        ft.var = c.expect_ident("a covariate").text;
        c.expect(")");
        f.terms.push_back(ft);
      } else {
        c.fail(t, "unknown term function '" + t.text + "'");
      }
    } else {
      FormulaTerm ft;
      ft.kind = TermKind::linear;
      ft.var = t.text;
      f.terms.push_back(ft);
    }
  } while (c.accept("+"));
  if (c.peek().kind != Tok::end) c.fail(c.peek(), "expected '+' or end of formula");
  (void)intercept;
  return f;
}

std::string CovariateGenerator::to_string() const {
  switch (kind) {
    case Kind::cycle:
      return "cycle(" + number_text(a) + ", " + number_text(b) + ")";
    case Kind::uniform:
      return "uniform(" + number_text(a) + ", " + number_text(b) + ")";
    case Kind::group:
      return "group(" + number_text(a) + ")";
  }
  return "";
}

QremlOptions ModelConfig::qreml_options() const {
  QremlOptions o;
  o.alpha = alpha;
  o.tol = tol;
  o.max_outer = max_outer;
  o.inner.bfgs.grad_tol = inner_tol;
  o.inner.bfgs.max_iter = inner_max_iter;
  return o;
}

std::vector<std::string> ModelConfig::covariate_names() const {
  std::vector<std::string> out;
  auto add = [&](const std::string& s) {
    if (!s.empty() && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  };
  for (const auto& f : spec.tpm_formulas) {
    for (const auto& t : f.terms) {
      if (t.kind != TermKind::smooth) {
        add(t.var);
        continue;
      }
      for (const auto& m : t.smooth.marginals) {
        for (const auto& v : m.vars) add(v);
      }
      add(t.smooth.by);
    }
  }
  return out;
}

namespace {

struct Line {
  int number = 0;
  std::string lhs, rhs;
  int lhs_col = 1, rhs_col = 1;
};

std::vector<double> parse_number_list(const std::string& s, int line, int col) {
  std::vector<double> out;
  Cursor c(tokenize(s, line, col - 1), line);
  do {
    const Token t = c.next();
    if (t.kind != Tok::number) c.fail(t, "expected a number");
    out.push_back(*to_number(t.text));
  } while (c.accept(","));
  if (c.peek().kind != Tok::end) c.fail(c.peek(), "expected ',' or end of line");
  return out;
}

double parse_single(const Line& l) {
  const auto v = parse_number_list(l.rhs, l.number, l.rhs_col);
  if (v.size() != 1) throw ConfigError(l.number, l.rhs_col, "expected a single number");
  return v[0];
}

CovariateGenerator parse_generator(const Line& l) {
  Cursor c(tokenize(l.rhs, l.number, l.rhs_col - 1), l.number);
  const Token f = c.expect_ident("cycle, uniform or group");
  CovariateGenerator g;
  std::size_t want = 2;
  if (f.text == "cycle") {
    g.kind = CovariateGenerator::Kind::cycle;
  } else if (f.text == "uniform") {
    g.kind = CovariateGenerator::Kind::uniform;
  } else if (f.text == "group") {
    g.kind = CovariateGenerator::Kind::group;
    want = 1;
  } else {
    c.fail(f, "unknown covariate generator '" + f.text + "'");
  }
  c.expect("(");
  std::vector<double> args;
  do {
    const Token t = c.next();
    if (t.kind != Tok::number) c.fail(t, "expected a number");
    args.push_back(*to_number(t.text));
  } while (c.accept(","));
  c.expect(")");
  if (c.peek().kind != Tok::end) c.fail(c.peek(), "expected end of line");
  if (args.size() != want) throw ConfigError(l.number, f.column, f.text + "() takes " + std::to_string(want) + " argument(s)");
  g.a = args[0];
  g.b = want == 2 ? args[1] : 0.0;
  if (g.kind == CovariateGenerator::Kind::cycle && !(g.a > 0)) {
    throw ConfigError(l.number, f.column, "cycle period must be positive");
  }
  if (g.kind == CovariateGenerator::Kind::uniform && !(g.b > g.a)) {
    throw ConfigError(l.number, f.column, "uniform needs lower < upper");
  }
  if (g.kind == CovariateGenerator::Kind::group && !(g.a >= 1 && g.a == std::floor(g.a))) {
    throw ConfigError(l.number, f.column, "group count must be a positive integer");
  }
  return g;
}

bool parse_bool(const Line& l) {
  const std::string v = trim(l.rhs);
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError(l.number, l.rhs_col, "expected true or false, found '" + v + "'");
}

// Splits "key arg" on the first run of whitespace.
std::pair<std::string, std::string> split_key(const std::string& lhs) {
  const auto sp = lhs.find_first_of(" \t");
  if (sp == std::string::npos) return {lhs, ""};
  return {lhs.substr(0, sp), trim(lhs.substr(sp))};
}

}  // namespace

ModelConfig parse_config(const std::string& text) {
  ModelConfig c;
  std::vector<Line> lines;
  {
    std::istringstream in(text);
    std::string raw;
    int n = 0;
    while (std::getline(in, raw)) {
      ++n;
      const auto hash = raw.find('#');
      const std::string body = hash == std::string::npos ? raw : raw.substr(0, hash);
      if (trim(body).empty()) continue;
      const auto eq = body.find('=');
      const int first = static_cast<int>(body.find_first_not_of(" \t")) + 1;
      if (eq == std::string::npos) throw ConfigError(n, first, "expected 'key = value'");
      Line l;
      l.number = n;
      l.lhs = trim(body.substr(0, eq));
      l.lhs_col = first;
      l.rhs = trim(body.substr(eq + 1));
      const auto rstart = body.find_first_not_of(" \t", eq + 1);
      l.rhs_col = rstart == std::string::npos ? static_cast<int>(eq) + 2 : static_cast<int>(rstart) + 1;
      if (l.lhs.empty()) throw ConfigError(n, first, "missing key before '='");
      if (l.rhs.empty()) throw ConfigError(n, l.rhs_col, "missing value after '='");
      lines.push_back(l);
    }
  }

  std::set<std::string> seen;
  auto once = [&](const Line& l, const std::string& key) {
    if (!seen.insert(key).second) throw ConfigError(l.number, l.lhs_col, "duplicate setting '" + key + "'");
  };
  std::optional<Formula> tpm_all;
  std::vector<std::tuple<int, int, Formula, int>> tpm_entries;
  std::optional<int> states;
  std::set<std::string> stream_names;

  for (const Line& l : lines) {
    const auto [key, arg] = split_key(l.lhs);
    const int arg_col = l.lhs_col + static_cast<int>(l.lhs.find(arg.empty() ? key : arg));
    if (key == "states") {
      once(l, key);
      const double v = parse_single(l);
      if (v != std::floor(v) || v < 2 || v > 20) throw ConfigError(l.number, l.rhs_col, "states must be an integer in 2..20");
      states = static_cast<int>(v);
    } else if (key == "stream") {
      if (arg.empty() || !is_ident_start(arg[0])) throw ConfigError(l.number, arg_col, "stream needs a column name");
      if (!stream_names.insert(arg).second) throw ConfigError(l.number, arg_col, "duplicate stream '" + arg + "'");
      try {
        c.spec.streams.push_back({arg, family_from_string(l.rhs)});
      } catch (const InvalidInput&) {
        throw ConfigError(l.number, l.rhs_col, "unknown family '" + l.rhs + "'");
      }
    } else if (key.rfind("tpm", 0) == 0 && (key == "tpm" || key[3] == '[')) {
      const std::string full = l.lhs;
      const Formula f = parse_formula(l.rhs, l.number, l.rhs_col - 1);
      if (full == "tpm") {
        once(l, "tpm");
        tpm_all = f;
      } else {
        std::string norm;
        for (char ch : full) {
          if (!std::isspace(static_cast<unsigned char>(ch))) norm += ch;
        }
        std::smatch mt;
        static const std::regex entry(R"(tpm\[(\d+),(\d+)\])");
        if (!std::regex_match(norm, mt, entry)) throw ConfigError(l.number, l.lhs_col, "expected tpm[i,j]");
        const int i = std::stoi(mt[1]), j = std::stoi(mt[2]);
        once(l, "tpm[" + std::to_string(i) + "," + std::to_string(j) + "]");
        tpm_entries.emplace_back(i, j, f, l.number);
      }
    } else if (key == "delta") {
      once(l, key);
      try {
        c.spec.delta_mode = delta_mode_from_string(l.rhs);
      } catch (const InvalidInput&) {
        throw ConfigError(l.number, l.rhs_col, "unknown delta mode '" + l.rhs + "'");
      }
    } else if (key == "track") {
      once(l, key);
      if (!is_ident_start(l.rhs[0])) throw ConfigError(l.number, l.rhs_col, "track must name a column");
      c.track_column = l.rhs;
    } else if (key == "lambda_init") {
      const double v = parse_single(l);
      if (!(v > 0)) throw ConfigError(l.number, l.rhs_col, "lambda_init must be positive");
      if (arg.empty()) {
        once(l, key);
        c.lambda_init = v;
      } else {
        once(l, "lambda_init " + arg);
        c.lambda_init_by_label.push_back({arg, number_text(v), l.number});
      }
    } else if (key == "map") {
      if (arg.empty()) throw ConfigError(l.number, arg_col, "map needs a penalty label");
      once(l, "map " + arg);
      if (!is_ident_start(l.rhs[0]) && !std::isdigit(static_cast<unsigned char>(l.rhs[0]))) {
        throw ConfigError(l.number, l.rhs_col, "map group must be a name, a number or NA");
      }
      c.map.push_back({arg, l.rhs, l.number});
    } else if (key == "share_across_entries") {
      once(l, key);
      c.share_across_entries = parse_bool(l);
    } else if (key == "alpha") {
      once(l, key);
      c.alpha = parse_single(l);
      if (!(c.alpha >= 0 && c.alpha < 1)) throw ConfigError(l.number, l.rhs_col, "alpha must lie in [0, 1)");
    } else if (key == "tol") {
      once(l, key);
      c.tol = parse_single(l);
      if (!(c.tol > 0)) throw ConfigError(l.number, l.rhs_col, "tol must be positive");
    } else if (key == "max_outer") {
      once(l, key);
      const double v = parse_single(l);
      if (v != std::floor(v) || v < 1) throw ConfigError(l.number, l.rhs_col, "max_outer must be a positive integer");
      c.max_outer = static_cast<int>(v);
    } else if (key == "inner_tol") {
      once(l, key);
      c.inner_tol = parse_single(l);
      if (!(c.inner_tol > 0)) throw ConfigError(l.number, l.rhs_col, "inner_tol must be positive");
    } else if (key == "inner_max_iter") {
      once(l, key);
      const double v = parse_single(l);
      if (v != std::floor(v) || v < 1) throw ConfigError(l.number, l.rhs_col, "inner_max_iter must be a positive integer");
      c.inner_max_iter = static_cast<int>(v);
    } else if (key == "seed") {
      once(l, key);
      const double v = parse_single(l);
      if (v != std::floor(v) || v < 0) throw ConfigError(l.number, l.rhs_col, "seed must be a non-negative integer");
      c.seed = static_cast<std::uint64_t>(v);
    } else if (key == "init") {
      if (arg.empty()) throw ConfigError(l.number, arg_col, "init needs a target");
      once(l, "init " + arg);
      c.init.push_back({arg, parse_number_list(l.rhs, l.number, l.rhs_col), l.number});
    } else if (key == "covariate") {
      if (arg.empty() || !is_ident_start(arg[0])) throw ConfigError(l.number, arg_col, "covariate needs a name");
      once(l, "covariate " + arg);
      c.covariates.emplace_back(arg, parse_generator(l));
    } else {
      throw ConfigError(l.number, l.lhs_col, "unknown key '" + key + "'");
    }
  }

  if (!states) throw ConfigError(1, 1, "missing 'states'");
  c.spec.N = *states;
  if (c.spec.streams.empty()) throw ConfigError(1, 1, "at least one 'stream' is required");
  const int N = c.spec.N;
  c.spec.tpm_formulas.assign(static_cast<std::size_t>(N * (N - 1)), tpm_all.value_or(Formula{}));
  for (const auto& [i, j, f, ln] : tpm_entries) {
    if (i < 1 || j < 1 || i > N || j > N || i == j) {
      throw ConfigError(ln, 1, "tpm[" + std::to_string(i) + "," + std::to_string(j) + "] is not an off-diagonal entry");
    }
    c.spec.tpm_formulas[static_cast<std::size_t>(offdiag_index(i - 1, j - 1, N))] = f;
  }
  for (const auto& e : c.init) {
    if (e.target.rfind("tpm[", 0) == 0) {
      int i = 0, j = 0;
      if (std::sscanf(e.target.c_str(), "tpm[%d,%d]", &i, &j) != 2 || i < 1 || j < 1 || i > N || j > N || i == j) {
        throw ConfigError(e.line, 1, "init " + e.target + " is not an off-diagonal entry");
      }
    }
  }
  return c;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string print_config(const ModelConfig& c) {
  std::ostringstream out;
  const int N = c.spec.N;
  out << "states = " << N << "\n";
  for (const auto& s : c.spec.streams) out << "stream " << s.name << " = " << to_string(s.family) << "\n";
  out << "delta = " << to_string(c.spec.delta_mode) << "\n";
  if (!c.track_column.empty()) out << "track = " << c.track_column << "\n";
  bool shared = true;
  for (const auto& f : c.spec.tpm_formulas) shared &= f.to_string() == c.spec.tpm_formulas.front().to_string();
  if (shared) {
    out << "tpm = " << c.spec.tpm_formulas.front().to_string() << "\n";
  } else {
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        if (i == j) continue;
        out << "tpm[" << i + 1 << "," << j + 1 << "] = "
            << c.spec.tpm_formulas[static_cast<std::size_t>(offdiag_index(i, j, N))].to_string() << "\n";
      }
    }
  }
  if (c.lambda_init) out << "lambda_init = " << number_text(*c.lambda_init) << "\n";
  for (const auto& e : c.lambda_init_by_label) out << "lambda_init " << e.key << " = " << e.value << "\n";
  for (const auto& e : c.map) out << "map " << e.key << " = " << e.value << "\n";
  out << "share_across_entries = " << (c.share_across_entries ? "true" : "false") << "\n";
  out << "alpha = " << number_text(c.alpha) << "\n";
  out << "tol = " << number_text(c.tol) << "\n";
  out << "max_outer = " << c.max_outer << "\n";
  out << "inner_tol = " << number_text(c.inner_tol) << "\n";
  out << "inner_max_iter = " << c.inner_max_iter << "\n";
  out << "seed = " << c.seed << "\n";
  for (const auto& e : c.init) {
    out << "init " << e.target << " =";
    for (std::size_t k = 0; k < e.values.size(); ++k) out << (k ? ", " : " ") << number_text(e.values[k]);
    out << "\n";
  }
  for (const auto& [name, g] : c.covariates) out << "covariate " << name << " = " << g.to_string() << "\n";
  return out.str();
}

bool label_matches(const std::string& label, const std::string& key) {
  if (label == key) return true;
  const auto dot = label.find('.');
  return label.rfind("gamma", 0) == 0 && dot != std::string::npos && label.substr(dot + 1) == key;
}

Vector initial_lambda(const ModelConfig& c, const PenaltyModel& penalties) {
  Vector lambda = penalties.default_lambda();
  if (c.lambda_init) lambda.setConstant(*c.lambda_init);
  for (const auto& e : c.lambda_init_by_label) {
    bool hit = false;
    for (std::size_t j = 0; j < penalties.size(); ++j) {
      if (label_matches(penalties.block(j).label, e.key)) {
        lambda(static_cast<Index>(j)) = *to_number(e.value);
        hit = true;
      }
    }
    if (!hit) throw ConfigError(e.line, 1, "lambda_init: no penalty block matches '" + e.key + "'");
  }
  return lambda;
}

LambdaMap lambda_map(const ModelConfig& c, const PenaltyModel& penalties) {
  std::vector<std::string> names(penalties.size());
  std::vector<int> from(penalties.size(), 0);
  for (const auto& e : c.map) {
    bool hit = false;
    for (std::size_t j = 0; j < penalties.size(); ++j) {
      if (!label_matches(penalties.block(j).label, e.key)) continue;
      if (from[j]) {
        throw ConfigError(e.line, 1, "map: block '" + penalties.block(j).label + "' already mapped on line " +
                                         std::to_string(from[j]));
      }
      names[j] = e.value == "NA" ? "" : "map:" + e.value;
      from[j] = e.line;
      hit = true;
    }
    if (!hit) throw ConfigError(e.line, 1, "map: no penalty block matches '" + e.key + "'");
  }
  std::vector<int> labels(penalties.size());
  std::map<std::string, int> ids;
  for (std::size_t j = 0; j < penalties.size(); ++j) {
    const std::string& label = penalties.block(j).label;
    std::string name = names[j];
    if (!from[j]) {
      const auto dot = label.find('.');
      name = c.share_across_entries && label.rfind("gamma", 0) == 0 && dot != std::string::npos
                 ? "shared:" + label.substr(dot + 1)
                 : "block:" + label;
    }
    if (name.empty()) {
      labels[j] = LambdaMap::kFixed;
      continue;
    }
    auto it = ids.emplace(name, static_cast<int>(ids.size())).first;
    labels[j] = it->second;
  }
  return LambdaMap::from_labels(labels);
}

Vector initial_theta(const ModelConfig& c, const HmmModel& model) {
  Vector theta = model.default_theta();
  const int N = c.spec.N;
  for (const auto& e : c.init) {
    auto fail = [&](const std::string& msg) { throw ConfigError(e.line, 1, "init " + e.target + ": " + msg); };
    auto count_ok = [&](std::size_t n) { return e.values.size() == 1 || e.values.size() == n; };
    auto value = [&](std::size_t k) { return e.values.size() == 1 ? e.values[0] : e.values[k]; };
    if (e.target == "tpm") {
      if (!count_ok(static_cast<std::size_t>(model.entries()))) fail("needs 1 or N(N-1) values");
      for (int k = 0; k < model.entries(); ++k) theta(model.entry_offset(k)) = value(static_cast<std::size_t>(k));
      continue;
    }
    if (e.target.rfind("tpm[", 0) == 0) {
      int i = 0, j = 0;
      std::sscanf(e.target.c_str(), "tpm[%d,%d]", &i, &j);
      if (e.values.size() != 1) fail("needs a single value");
      theta(model.entry_offset(offdiag_index(i - 1, j - 1, N))) = e.values[0];
      continue;
    }
    bool done = false;
    const auto dot = e.target.find('.');
    if (dot != std::string::npos) {
      const std::string sname = e.target.substr(0, dot), pname = e.target.substr(dot + 1);
      for (std::size_t s = 0; s < c.spec.streams.size() && !done; ++s) {
        if (c.spec.streams[s].name != sname) continue;
        const auto params = family_params(c.spec.streams[s].family);
        for (std::size_t p = 0; p < params.size(); ++p) {
          if (params[p].name != pname) continue;
          if (!count_ok(static_cast<std::size_t>(N))) fail("needs 1 or N values");
          for (int i = 0; i < N; ++i) {
            const double w = apply_link(params[p].link, value(static_cast<std::size_t>(i)));
            if (!std::isfinite(w)) fail("value outside the parameter domain");
            theta(model.emission_index(s, static_cast<int>(p), i)) = w;
          }
          done = true;
          break;
        }
        if (!done) fail("stream '" + sname + "' has no parameter '" + pname + "'");
      }
    }
    if (done) continue;
    const LayoutBlock* block = nullptr;
    for (const auto& b : model.layout().blocks) {
      if (b.name == e.target) block = &b;
    }
    if (!block) fail("unknown target");
    if (!count_ok(static_cast<std::size_t>(block->length))) fail("needs 1 or " + std::to_string(block->length) + " values");
    for (Index k = 0; k < block->length; ++k) theta(block->start + k) = value(static_cast<std::size_t>(k));
  }
  return theta;
}

}  // namespace mshmm
