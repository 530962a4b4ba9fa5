#include "symcon/sysdl.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace symcon {

namespace {

enum class Section { None, Params, Inputs, Delays, States, Dynamics, Domain };

std::optional<Section> section_keyword(std::string_view word) {
  if (word == "params") return Section::Params;
  if (word == "inputs") return Section::Inputs;
  if (word == "delays") return Section::Delays;
  if (word == "states") return Section::States;
  if (word == "dynamics") return Section::Dynamics;
  if (word == "domain") return Section::Domain;
  return std::nullopt;
}

struct Line {
  int number = 0;
  std::string text;  // comment stripped
};

// Cursor over one logical line (possibly joined from several physical lines
// separated by '\n'). Columns are 1-based.
class Cursor {
 public:
  Cursor(const Line& line, std::size_t pos = 0) : text_(line.text), line_(line.number), pos_(pos) {}

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }
  char peek() {
    skip_space();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }
  bool accept(std::string_view s) {
    skip_space();
    if (text_.compare(pos_, s.size(), s) == 0) {
      pos_ += s.size();
      return true;
    }
    return false;
  }
  void expect(std::string_view s) {
    if (!accept(s)) fail("expected '" + std::string(s) + "'");
  }
  std::string word() {
    skip_space();
    std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_' ||
                                   text_[pos_] == '.' || text_[pos_] == '-')) {
      // a ".." range or "->" arrow ends the word
      if (text_[pos_] == '.' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '.') break;
      if (text_[pos_] == '-' && (pos_ == start || (pos_ + 1 < text_.size() && text_[pos_ + 1] == '>'))) break;
      if (text_[pos_] == '.' && pos_ == start) break;
      ++pos_;
    }
    if (start == pos_) fail("expected a name");
    return text_.substr(start, pos_ - start);
  }
  std::string ident() {
    skip_space();
    std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
    if (start == pos_ || std::isdigit(static_cast<unsigned char>(text_[start]))) {
      pos_ = start;
      fail("expected an identifier");
    }
    return text_.substr(start, pos_ - start);
  }
  // A component name: ident or ident[int].
  std::string component() {
    std::string name = ident();
    if (pos_ < text_.size() && text_[pos_] == '[') {
      std::size_t close = text_.find(']', pos_);
      if (close == std::string::npos) fail("missing ']'");
      std::string idx = text_.substr(pos_ + 1, close - pos_ - 1);
      for (char c : idx)
        if (!std::isdigit(static_cast<unsigned char>(c))) fail("component index must be a positive integer");
      if (idx.empty() || std::stoi(idx) < 1) fail("component index must be a positive integer");
      name += "[" + idx + "]";
      pos_ = close + 1;
    }
    return name;
  }
  // Text up to (not including) any of `stops` at bracket depth 0, or the end.
  std::pair<std::string, std::size_t> until(std::string_view stops) {
    skip_space();
    std::size_t start = pos_;
    int depth = 0;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (depth == 0 && stops.find(c) != std::string_view::npos) break;
      if (c == '(' || c == '[' || c == '{') ++depth;
      if (c == ')' || c == ']' || c == '}') --depth;
      ++pos_;
    }
    std::size_t end = pos_;
    while (end > start && std::isspace(static_cast<unsigned char>(text_[end - 1]))) --end;
    return {text_.substr(start, end - start), start};
  }
  std::string rest() {
    skip_space();
    std::string r = text_.substr(pos_);
    pos_ = text_.size();
    while (!r.empty() && std::isspace(static_cast<unsigned char>(r.back()))) r.pop_back();
    return r;
  }
  std::size_t pos() const { return pos_; }

  // Line/column of an offset into the logical line.
  std::pair<int, int> where(std::size_t offset) const {
    int line = line_, col = 1;
    for (std::size_t i = 0; i < offset && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    return {line, col};
  }
  [[noreturn]] void fail(const std::string& msg) const { fail_at(pos_, msg); }
  [[noreturn]] void fail_at(std::size_t offset, const std::string& msg) const {
    auto [l, c] = where(offset);
    throw ParseError(msg, l, c);
  }

  // Parse an expression that starts at `offset`, translating error positions.
  Expr expression(const std::string& text, std::size_t offset) const {
    if (text.empty()) fail_at(offset, "expected an expression");
    try {
      return parse_expression(text);
    } catch (const ParseError& e) {
      auto [l, c] = where(offset);
      if (e.line() == 1)
        throw ParseError(e.message(), l, c + e.column() - 1);
      throw ParseError(e.message(), l + e.line() - 1, e.column());
    }
  }
  Expr expression_until(std::string_view stops) {
    auto [text, at] = until(stops);
    return expression(text, at);
  }

 private:
  std::string text_;
  int line_;
  std::size_t pos_;
};

// Physical lines -> logical lines: comments stripped, blank lines dropped,
// lines with unbalanced brackets joined with their successors.
std::vector<Line> logical_lines(std::string_view text) {
  std::vector<Line> out;
  std::istringstream in{std::string(text)};
  std::string raw;
  int number = 0;
  Line pending;
  int depth = 0;
  while (std::getline(in, raw)) {
    ++number;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    bool blank = raw.find_first_not_of(" \t") == std::string::npos;
    if (depth == 0) {
      if (blank) continue;
      pending = Line{number, raw};
    } else {
      pending.text += "\n" + raw;
    }
    for (char c : raw) {
      if (c == '(' || c == '[') ++depth;
      if (c == ')' || c == ']') --depth;
    }
    if (depth <= 0) {
      depth = 0;
      out.push_back(pending);
    }
  }
  if (depth > 0) throw ParseError("unbalanced brackets", pending.number, 1);
  return out;
}

class Loader {
 public:
  explicit Loader(std::string source) { globals_.name = std::move(source); }

  LoadedModel load(std::string_view text) {
    lines_ = logical_lines(text);
    while (idx_ < lines_.size()) statement();
    LoadedModel out;
    if (!spec_.nodes.empty() || !spec_.templates.empty()) {
      if (!globals_.states.empty())
        throw ParseError("a network file declares states inside templates, not at top level", states_line_, 1);
      spec_.globals = globals_;
      resolve_default_components();
      try {
        out.model = std::make_shared<const SystemModel>(assemble_network(spec_));
      } catch (const ModelError& e) {
        throw ModelError(globals_.name + ": " + e.what());
      }
      out.network = spec_;
    } else {
      if (globals_.field.size() != globals_.states.size() || std::any_of(have_.begin(), have_.end(), [](bool b) { return !b; })) {
        for (std::size_t i = 0; i < globals_.states.size(); ++i)
          if (!have_[i]) throw ModelError(globals_.name + ": state '" + globals_.states[i] + "' has no dynamics");
      }
      try {
        out.model = std::make_shared<const SystemModel>(globals_);
      } catch (const ModelError& e) {
        throw ModelError(globals_.name + ": " + e.what());
      }
    }
    validate_actions(*out.model, out.network);
    return out;
  }

 private:
  const Line& line() const { return lines_[idx_]; }

  static std::string first_word(const Line& l) {
    std::size_t i = l.text.find_first_not_of(" \t");
    std::size_t j = i;
    while (j < l.text.size() && (std::isalnum(static_cast<unsigned char>(l.text[j])) || l.text[j] == '_' || l.text[j] == '-')) ++j;
    return l.text.substr(i, j - i);
  }

  void statement() {
    Cursor c(line());
    std::string kw = first_word(line());
    if (kw == "model") {
      c.word();
      globals_.name = c.rest();
      ++idx_;
    } else if (auto s = section_keyword(kw)) {
      c.word();
      if (!c.at_end()) c.fail("section keyword '" + kw + "' must stand on its own line");
      ++idx_;
      section(*s, nullptr);
    } else if (kw == "template") {
      template_block();
    } else if (kw == "node") {
      node_statement(c);
      ++idx_;
    } else if (kw == "coupling") {
      coupling_statement(c);
      ++idx_;
    } else if (kw == "edge") {
      edge_statement(c);
      ++idx_;
    } else if (kw == "action") {
      action_statement(c);
      ++idx_;
    } else {
      c.fail("unknown statement '" + kw + "'");
    }
  }

  bool ends_section(const Line& l) const {
    std::string kw = first_word(l);
    return section_keyword(kw) || kw == "template" || kw == "node" || kw == "coupling" || kw == "edge" ||
           kw == "action" || kw == "model" || l.text.find_first_not_of(" \t") == l.text.find('}');
  }

  double constant(Cursor& c, const std::string& text, std::size_t at) {
    Expr e = c.expression(text, at);
    Environment env;
    for (const auto& [k, v] : globals_.params) env.set(k, v);
    try {
      return evaluate(e, env);
    } catch (const EvalError& err) {
      c.fail_at(at, std::string("not a constant: ") + err.what());
    }
  }

  // Entries of a section, for the top level (tmpl == nullptr) or a template.
  void section(Section s, NodeTemplate* tmpl) {
    while (idx_ < lines_.size() && !ends_section(line())) {
      Cursor c(line());
      switch (s) {
        case Section::Params: {
          if (tmpl) c.fail("parameters are declared at top level");
          std::string name = c.ident();
          c.expect("=");
          auto [text, at] = c.until("");
          double v = constant(c, text, at);
          globals_.params.emplace_back(name, v);
          break;
        }
        case Section::Inputs: {
          if (tmpl) c.fail("inputs are declared at top level");
          std::string name = c.ident();
          c.expect("=");
          auto [text, at] = c.until("");
          if (text == "external")
            globals_.inputs.push_back({name, std::nullopt});
          else
            globals_.inputs.push_back({name, c.expression(text, at)});
          break;
        }
        case Section::Delays: {
          if (tmpl) c.fail("delays are declared at top level");
          std::string name = c.ident();
          c.expect("=");
          auto [text, at] = c.until("");
          globals_.delays.emplace_back(name, constant(c, text, at));
          break;
        }
        case Section::States: {
          if (!tmpl && states_line_ == 0) states_line_ = line().number;
          do {
            std::string name = c.ident();
            int dim = 0;
            if (c.accept("[")) {
              auto [text, at] = c.until("]");
              for (char ch : text)
                if (!std::isdigit(static_cast<unsigned char>(ch))) c.fail_at(at, "state dimension must be an integer");
              if (text.empty() || std::stoi(text) < 1) c.fail_at(at, "state dimension must be positive");
              dim = std::stoi(text);
              c.expect("]");
            }
            auto& states = tmpl ? tmpl->states : globals_.states;
            if (dim == 0) {
              states.push_back(name);
            } else {
              for (int k = 1; k <= dim; ++k) states.push_back(component_name(name, k));
            }
            if (tmpl) {
              tmpl->dynamics.resize(states.size());
              tmpl_have_.resize(states.size(), false);
            } else {
              globals_.field.resize(states.size());
              have_.resize(states.size(), false);
            }
          } while (c.accept(","));
          if (!c.at_end()) c.fail("unexpected text after state list");
          break;
        }
        case Section::Dynamics: {
          c.expect("d/dt");
          std::size_t at = c.pos();
          std::string name = c.component();
          c.expect("=");
          auto& states = tmpl ? tmpl->states : globals_.states;
          auto it = std::find(states.begin(), states.end(), name);
          if (it == states.end()) c.fail_at(at, "d/dt of undeclared state '" + name + "'");
          std::size_t k = it - states.begin();
          auto& have = tmpl ? tmpl_have_ : have_;
          if (have[k]) c.fail_at(at, "second equation for '" + name + "'");
          have[k] = true;
          Expr e = c.expression_until("");
          (tmpl ? tmpl->dynamics : globals_.field)[k] = e;
          break;
        }
        case Section::Domain: {
          std::string w = c.ident();
          if (w == "positive") {
            if (tmpl) c.fail("'positive' applies to the whole model");
            globals_.positive = true;
          } else {
            std::string name = w;
            if (c.peek() == '[') {
              c.accept("[");
              auto [idx, at] = c.until("]");
              name += "[" + idx + "]";
              c.expect("]");
            }
            c.expect("in");
            c.expect("[");
            auto [lo_text, lo_at] = c.until(",");
            c.expect(",");
            auto [hi_text, hi_at] = c.until("]");
            c.expect("]");
            Interval r{constant(c, lo_text, lo_at), constant(c, hi_text, hi_at)};
            if (!(r.lo <= r.hi)) c.fail_at(lo_at, "empty interval");
            if (name == "t") {
              if (tmpl) c.fail("the time domain is declared at top level");
              globals_.time_domain = r;
            } else {
              (tmpl ? tmpl->domain : globals_.domain).set(name, r);
            }
          }
          if (!c.at_end()) c.fail("unexpected text after domain entry");
          break;
        }
        case Section::None:
          break;
      }
      ++idx_;
    }
  }

  void template_block() {
    Cursor c(line());
    c.word();
    NodeTemplate t;
    t.id = c.word();
    c.expect("{");
    if (!c.at_end()) c.fail("template body starts on the next line");
    int open_line = line().number;
    ++idx_;
    tmpl_have_.clear();
    while (true) {
      if (idx_ >= lines_.size()) throw ParseError("template '" + t.id + "' is not closed", open_line, 1);
      Cursor b(line());
      if (b.accept("}")) {
        if (!b.at_end()) b.fail("unexpected text after '}'");
        ++idx_;
        break;
      }
      std::string kw = first_word(line());
      auto s = section_keyword(kw);
      if (!s || *s == Section::Params || *s == Section::Inputs || *s == Section::Delays)
        b.fail("templates contain only states, dynamics and domain sections");
      ++idx_;
      section(*s, &t);
    }
    for (std::size_t k = 0; k < t.states.size(); ++k)
      if (k >= tmpl_have_.size() || !tmpl_have_[k])
        throw ModelError(globals_.name + ": template '" + t.id + "' has no dynamics for '" + t.states[k] + "'");
    for (const auto& name : t.domain.names)
      if (std::find(t.states.begin(), t.states.end(), name) == t.states.end())
        throw ModelError(globals_.name + ": template '" + t.id + "' domain names unknown state '" + name + "'");
    spec_.templates.push_back(std::move(t));
  }

  std::vector<std::string> id_list(Cursor& c) {
    std::vector<std::string> ids;
    do {
      std::size_t at = c.pos();
      std::string a = c.word();
      if (c.accept("..")) {
        std::string b = c.word();
        int lo, hi;
        try {
          lo = std::stoi(a);
          hi = std::stoi(b);
        } catch (const std::exception&) {
          c.fail_at(at, "ranges need integer ends");
        }
        if (hi < lo) c.fail_at(at, "empty range");
        for (int k = lo; k <= hi; ++k) ids.push_back(std::to_string(k));
      } else {
        ids.push_back(a);
      }
    } while (c.accept(","));
    return ids;
  }

  void node_statement(Cursor& c) {
    c.word();
    auto ids = id_list(c);
    c.expect(":");
    std::string tmpl = c.word();
    if (!c.at_end()) c.fail("unexpected text after node declaration");
    for (auto& id : ids) spec_.nodes.push_back({id, tmpl});
  }

  void coupling_statement(Cursor& c) {
    c.word();
    std::string label = c.word();
    c.expect("(");
    std::string tail = c.ident();
    c.expect(",");
    std::string head = c.ident();
    c.expect(")");
    std::string comp;
    if (c.accept(".")) comp = c.component();
    c.expect("=");
    Expr e = c.expression_until("");
    auto it = std::find_if(spec_.couplings.begin(), spec_.couplings.end(), [&](const auto& k) { return k.label == label; });
    if (it == spec_.couplings.end()) {
      spec_.couplings.push_back({label, tail, head, {}});
      it = spec_.couplings.end() - 1;
    } else if (it->tail_var != tail || it->head_var != head) {
      c.fail("coupling '" + label + "' redeclared with different endpoint names");
    }
    for (const auto& [k, v] : it->terms)
      if (k == comp) c.fail("coupling '" + label + "' already drives '" + (comp.empty() ? "the state" : comp) + "'");
    it->terms.emplace_back(comp, e);
  }

  void edge_statement(Cursor& c) {
    c.word();
    std::vector<std::pair<std::string, std::string>> arrows;
    std::vector<bool> both;
    do {
      std::string a = c.word();
      bool two = false;
      if (c.accept("<->"))
        two = true;
      else
        c.expect("->");
      std::string b = c.word();
      arrows.emplace_back(a, b);
      both.push_back(two);
    } while (c.accept(","));
    c.expect(":");
    std::string label = c.word();
    if (!c.at_end()) c.fail("unexpected text after edge declaration");
    for (std::size_t k = 0; k < arrows.size(); ++k) {
      spec_.edges.push_back({arrows[k].first, arrows[k].second, label});
      if (both[k]) spec_.edges.push_back({arrows[k].second, arrows[k].first, label});
    }
  }

  std::vector<std::pair<std::string, Expr>> mapping(Cursor& c) {
    std::vector<std::pair<std::string, Expr>> out;
    c.expect("{");
    if (c.accept("}")) return out;
    do {
      std::string name = c.component();
      c.expect("->");
      out.emplace_back(name, c.expression_until(",}"));
    } while (c.accept(","));
    c.expect("}");
    return out;
  }

  void action_statement(Cursor& c) {
    ActionDecl a;
    a.line = line().number;
    c.word();
    a.name = c.word();
    std::string kind = c.word();
    if (kind == "permute") {
      a.kind = ActionDecl::Kind::Permute;
      while (c.accept("(")) {
        auto [body, at] = c.until(")");
        c.expect(")");
        std::vector<std::string> cycle;
        std::istringstream ss(body);
        std::string tok;
        while (ss >> tok) {
          if (!tok.empty() && tok.back() == ',') tok.pop_back();
          if (!tok.empty()) cycle.push_back(tok);
        }
        if (cycle.empty()) c.fail_at(at, "empty cycle");
        a.cycles.push_back(cycle);
      }
    } else if (kind == "linear") {
      a.kind = ActionDecl::Kind::Linear;
      c.expect("[");
      std::vector<std::vector<double>> rows;
      do {
        c.expect("[");
        std::vector<double> row;
        do {
          auto [text, at] = c.until(",]");
          row.push_back(constant(c, text, at));
        } while (c.accept(","));
        c.expect("]");
        rows.push_back(row);
      } while (c.accept(","));
      c.expect("]");
      for (const auto& r : rows)
        if (r.size() != rows.size()) c.fail("linear action matrix must be square");
      a.matrix.resize(rows.size(), rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows.size(); ++j) a.matrix(i, j) = rows[i][j];
    } else if (kind == "map") {
      a.kind = ActionDecl::Kind::Map;
      a.state_map = mapping(c);
      if (c.accept("input-map")) a.input_map = mapping(c);
    } else {
      c.fail("unknown action kind '" + kind + "' (expected permute, linear or map)");
    }
    if (c.accept("shift")) {
      auto [text, at] = c.until("");
      a.shift = constant(c, text, at);
    }
    if (!c.at_end()) c.fail("unexpected text after action");
    for (const auto& other : globals_.actions)
      if (other.name == a.name) c.fail("action '" + a.name + "' is declared twice");
    globals_.actions.push_back(std::move(a));
  }

  // Couplings declared without a target component drive the head's only state.
  void resolve_default_components() {
    for (auto& c : spec_.couplings)
      for (auto& [comp, e] : c.terms) {
        if (!comp.empty()) continue;
        for (const auto& edge : spec_.edges) {
          if (edge.label != c.label) continue;
          int head = spec_.node_index(edge.head);
          if (head < 0) break;
          const auto& ht = spec_.template_of(head);
          if (ht.states.size() != 1)
            throw ModelError(globals_.name + ": coupling '" + c.label + "' must name a component of template '" + ht.id + "'");
          comp = ht.states.front();
          break;
        }
      }
  }

  void validate_actions(const SystemModel& m, const std::optional<NetworkSpec>& net) {
    for (const auto& a : globals_.actions) {
      auto fail = [&](const std::string& msg) { throw ParseError("action '" + a.name + "': " + msg, a.line, 1); };
      switch (a.kind) {
        case ActionDecl::Kind::Permute: {
          std::set<std::string> used;
          for (const auto& cyc : a.cycles)
            for (const auto& id : cyc) {
              if (!used.insert(id).second) fail("'" + id + "' appears twice");
              bool ok = net ? net->node_index(id) >= 0 : m.state_index(id) >= 0;
              if (!net && !ok) {
                try {
                  int k = std::stoi(id);
                  ok = k >= 1 && k <= m.dimension();
                } catch (const std::exception&) {
                }
              }
              if (!ok) fail("'" + id + "' is not a " + std::string(net ? "node" : "state"));
            }
          break;
        }
        case ActionDecl::Kind::Linear:
          if (a.matrix.rows() != m.dimension())
            fail("matrix is " + std::to_string(a.matrix.rows()) + "x" + std::to_string(a.matrix.rows()) +
                 ", model has " + std::to_string(m.dimension()) + " states");
          break;
        case ActionDecl::Kind::Map:
          for (const auto& [k, e] : a.state_map) {
            if (m.state_index(k) < 0) fail("'" + k + "' is not a state");
            try {
              m.bind(e);
            } catch (const ModelError& err) {
              fail(err.what());
            }
          }
          for (const auto& [k, e] : a.input_map) {
            if (m.input_index(k) < 0) fail("'" + k + "' is not an input");
            try {
              m.bind(e);
            } catch (const ModelError& err) {
              fail(err.what());
            }
          }
          break;
      }
    }
  }

  std::vector<Line> lines_;
  std::size_t idx_ = 0;
  ModelDescription globals_;
  NetworkSpec spec_;
  std::vector<bool> have_, tmpl_have_;
  int states_line_ = 0;
};

}  // namespace

LoadedModel parse_model(std::string_view text, const std::string& source) {
  Loader loader(source);
  LoadedModel out = loader.load(text);
  out.source = source;
  return out;
}

LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_model(ss.str(), path);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.message(), e.line(), e.column());
  }
}

}  // namespace symcon
