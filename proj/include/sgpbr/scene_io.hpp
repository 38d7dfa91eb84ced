#pragma once

// Line-oriented scene files.
//
//   version 1
//   [geometry]
//   union {
//     sphere center -0.6 0 0 radius 0.5 material 0
//     box center 0.6 0 0 half_extents 0.4 0.4 0.4 material 1
//   }
//   [materials]
//   constant id 0 albedo 0.8 0.3 0.2 roughness 0.4
//   [light]
//   random count 16 seed 7
//   [cameras]
//   canonical distance 3.5 resolution 64
//   [render]
//   samples 64
//
// Every line is a keyword followed by `key value...` pairs; a trailing `{`
// opens a block of child lines closed by a lone `}`. `#` starts a comment.
// Keys not in the keyword's schema, repeated keys and repeated sections are
// rejected with the line number. Parsing fills every default, and
// serialisation writes every key, so parse(serialize(d)) == d.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sgpbr/camera.hpp"
#include "sgpbr/envmap.hpp"
#include "sgpbr/fields.hpp"
#include "sgpbr/image.hpp"
#include "sgpbr/inverse.hpp"
#include "sgpbr/renderer.hpp"
#include "sgpbr/rng.hpp"
#include "sgpbr/sdf.hpp"
#include "sgpbr/sg.hpp"

namespace sgpbr {

class ParseError : public InputError {
 public:
  ParseError(int line, const std::string& what)
      : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct SceneValue {
  std::vector<double> numbers;
  std::string text;
  bool is_text = false;

  friend bool operator==(const SceneValue&, const SceneValue&) = default;
};

struct Directive {
  std::string keyword;
  /// In schema order, defaults filled.
  std::vector<std::pair<std::string, SceneValue>> fields;
  std::vector<Directive> children;
  /// Source line; not part of equality.
  int line = 0;

  const SceneValue& value(std::string_view key) const {
    for (const auto& [k, v] : fields) {
      if (k == key) return v;
    }
    throw ParseError(line, keyword + ": missing key " + std::string(key));
  }
  double number(std::string_view key, std::size_t i = 0) const {
    return value(key).numbers.at(i);
  }
  int integer(std::string_view key) const {
    const double v = number(key);
    if (v != std::floor(v) || std::abs(v) > 2e9) {
      throw ParseError(line, keyword + ": " + std::string(key) + " must be an integer");
    }
    return static_cast<int>(v);
  }
  Vec3d vec3(std::string_view key) const {
    const auto& n = value(key).numbers;
    return {n.at(0), n.at(1), n.at(2)};
  }
  const std::string& text(std::string_view key) const { return value(key).text; }

  friend bool operator==(const Directive& a, const Directive& b) {
    return a.keyword == b.keyword && a.fields == b.fields && a.children == b.children;
  }
};

struct RenderSettings {
  RenderConfig config;
  Rgbd background{};

  friend bool operator==(const RenderSettings&, const RenderSettings&) = default;
};

struct SceneDescription {
  int version = 1;
  /// Exactly one root node.
  Directive geometry;
  std::vector<Directive> materials;
  std::vector<Directive> light;
  std::vector<Directive> cameras;
  RenderSettings render;

  friend bool operator==(const SceneDescription&, const SceneDescription&) = default;
};

namespace detail {

// Arity -1 marks a text value.
struct KeySpec {
  std::string key;
  int arity = 1;
  std::optional<std::vector<double>> def{};
  std::optional<std::string> text_def{};
};

struct DirectiveSpec {
  std::string keyword;
  std::vector<KeySpec> keys;
  bool block = false;
};

inline KeySpec num(std::string key, std::vector<double> def) {
  const int arity = static_cast<int>(def.size());
  return {std::move(key), arity, std::move(def), std::nullopt};
}
inline KeySpec required(std::string key, int arity) {
  return {std::move(key), arity, std::nullopt, std::nullopt};
}
inline KeySpec text(std::string key, std::optional<std::string> def = std::nullopt) {
  return {std::move(key), -1, std::nullopt, std::move(def)};
}

inline const std::vector<DirectiveSpec>& geometry_schema() {
  static const std::vector<DirectiveSpec> s = {
      {"sphere", {num("center", {0, 0, 0}), num("radius", {1}), num("material", {0})}},
      {"box",
       {num("center", {0, 0, 0}), num("half_extents", {0.5, 0.5, 0.5}),
        num("material", {0})}},
      {"torus",
       {num("center", {0, 0, 0}), num("major_radius", {0.7}), num("minor_radius", {0.25}),
        num("material", {0})}},
      {"plane", {num("normal", {0, 0, 1}), num("offset", {0}), num("material", {0})}},
      {"union", {}, true},
      {"intersection", {}, true},
      {"subtraction", {}, true},
      {"grid", {num("resolution", {64}), num("padding", {0.1}), num("material", {0})}, true},
      {"neural",
       {num("radius", {1}), num("seed", {0}), num("pe", {6}), num("width", {64}),
        num("layers", {4}), num("material", {0})}},
  };
  return s;
}

inline std::vector<KeySpec> material_value_keys() {
  return {num("albedo", {0.5, 0.5, 0.5}), num("roughness", {0.5}), num("metallic", {0.0}),
          num("specular", {0.5})};
}

inline const std::vector<DirectiveSpec>& materials_schema() {
  static const std::vector<DirectiveSpec> s = [] {
    std::vector<DirectiveSpec> out;
    DirectiveSpec constant{"constant", {required("id", 1)}};
    for (KeySpec k : material_value_keys()) constant.keys.push_back(k);
    DirectiveSpec grid{"grid",
                       {required("id", 1), num("origin", {-1, -1, -1}), num("cell", {0.25}),
                        num("resolution", {9})}};
    for (KeySpec k : material_value_keys()) grid.keys.push_back(k);
    DirectiveSpec neural{"neural",
                         {required("id", 1), num("seed", {0}), num("pe", {10}),
                          num("width", {128}), num("layers", {4})}};
    out = {constant, grid, neural};
    return out;
  }();
  return s;
}

inline const std::vector<DirectiveSpec>& light_schema() {
  static const std::vector<DirectiveSpec> s = {
      {"lobe", {required("axis", 3), required("sharpness", 1), required("amplitude", 3)}},
      {"fibonacci", {required("count", 1), num("energy", {1, 1, 1}), num("sharpness", {10})}},
      {"random",
       {required("count", 1), num("seed", {0}), num("sharpness_min", {2}),
        num("sharpness_max", {50}), num("amplitude_min", {0.2}), num("amplitude_max", {1.2})}},
      {"envmap", {text("path"), num("lobes", {16})}},
  };
  return s;
}

inline const std::vector<DirectiveSpec>& cameras_schema() {
  static const std::vector<DirectiveSpec> s = {
      {"canonical",
       {num("distance", {3}), num("resolution", {64}), num("fov", {40}), num("ortho", {0})}},
      {"orbit",
       {num("distance", {3}), num("azimuth", {0}), num("elevation", {0}),
        num("resolution", {64}), num("fov", {40}), num("ortho", {0})}},
      {"camera",
       {required("position", 3), num("target", {0, 0, 0}), num("up", {0, 0, 1}),
        num("fov", {40}), num("width", {64}), num("height", {64}), num("ortho", {0})}},
  };
  return s;
}

inline const std::vector<KeySpec>& render_schema() {
  static const std::vector<KeySpec> s = {
      num("samples", {64}), num("subdivision", {8}),      num("levels", {3}),
      num("spp", {1}),      text("mode", "explicit"),     num("background", {0, 0, 0}),
      num("seed", {0}),
  };
  return s;
}

struct Token {
  std::string text;
  bool quoted = false;
};

inline std::vector<Token> tokenize(std::string_view line, int line_no) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (c == '#') break;
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      continue;
    }
    if (c == '"') {
      const std::size_t end = line.find('"', i + 1);
      if (end == std::string_view::npos) throw ParseError(line_no, "unterminated string");
      out.push_back({std::string(line.substr(i + 1, end - i - 1)), true});
      i = end + 1;
      continue;
    }
    std::size_t end = i;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r' &&
           line[end] != '#') {
      ++end;
    }
    out.push_back({std::string(line.substr(i, end - i)), false});
    i = end;
  }
  return out;
}

inline std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Parses `key value...` pairs of one line against `keys`, filling defaults.
inline std::vector<std::pair<std::string, SceneValue>> parse_fields(
    const std::string& keyword, const std::vector<KeySpec>& keys,
    const std::vector<Token>& tokens, std::size_t begin, int line_no) {
  std::map<std::string, SceneValue> given;
  std::size_t i = begin;
  while (i < tokens.size()) {
    const std::string& key = tokens[i].text;
    const KeySpec* spec = nullptr;
    for (const KeySpec& k : keys) {
      if (k.key == key) spec = &k;
    }
    if (spec == nullptr || tokens[i].quoted) {
      throw ParseError(line_no, keyword + ": unknown key '" + key + "'");
    }
    if (given.contains(key)) throw ParseError(line_no, keyword + ": repeated key '" + key + "'");
    ++i;
    SceneValue v;
    if (spec->arity < 0) {
      if (i >= tokens.size()) throw ParseError(line_no, keyword + "." + key + ": missing value");
      v.is_text = true;
      v.text = tokens[i++].text;
    } else {
      for (int a = 0; a < spec->arity; ++a, ++i) {
        if (i >= tokens.size()) {
          throw ParseError(line_no, keyword + "." + key + ": expected " +
                                        std::to_string(spec->arity) + " numbers");
        }
        const auto x = tokens[i].quoted ? std::nullopt : parse_number(tokens[i].text);
        if (!x) {
          throw ParseError(line_no, keyword + "." + key + ": '" + tokens[i].text +
                                        "' is not a finite number");
        }
        v.numbers.push_back(*x);
      }
    }
    given.emplace(key, std::move(v));
  }
  std::vector<std::pair<std::string, SceneValue>> out;
  for (const KeySpec& k : keys) {
    if (auto it = given.find(k.key); it != given.end()) {
      out.emplace_back(k.key, std::move(it->second));
    } else if (k.def) {
      out.emplace_back(k.key, SceneValue{*k.def, {}, false});
    } else if (k.text_def) {
      out.emplace_back(k.key, SceneValue{{}, *k.text_def, true});
    } else {
      throw ParseError(line_no, keyword + ": missing required key '" + k.key + "'");
    }
  }
  return out;
}

struct Line {
  int number = 0;
  std::vector<Token> tokens;
};

/// Parses directives of one section; blocks nest through `{` and `}`.
inline std::vector<Directive> parse_directives(const std::vector<Line>& lines,
                                               std::size_t& pos,
                                               const std::vector<DirectiveSpec>& schema,
                                               bool nested, int open_line) {
  std::vector<Directive> out;
  while (pos < lines.size()) {
    const Line& ln = lines[pos];
    if (ln.tokens.size() == 1 && ln.tokens[0].text == "}" && !ln.tokens[0].quoted) {
      if (!nested) throw ParseError(ln.number, "unmatched '}'");
      ++pos;
      return out;
    }
    const std::string& kw = ln.tokens[0].text;
    const DirectiveSpec* spec = nullptr;
    for (const DirectiveSpec& s : schema) {
      if (s.keyword == kw) spec = &s;
    }
    if (spec == nullptr) throw ParseError(ln.number, "unknown keyword '" + kw + "'");
    std::vector<Token> tokens = ln.tokens;
    const bool opens = !tokens.empty() && tokens.back().text == "{" && !tokens.back().quoted;
    if (opens) tokens.pop_back();
    if (opens != spec->block) {
      throw ParseError(ln.number, spec->block ? kw + " needs a '{' block" : kw + " takes no block");
    }
    Directive d;
    d.keyword = kw;
    d.line = ln.number;
    d.fields = parse_fields(kw, spec->keys, tokens, 1, ln.number);
    ++pos;
    if (opens) d.children = parse_directives(lines, pos, schema, true, ln.number);
    out.push_back(std::move(d));
  }
  if (nested) throw ParseError(open_line, "block opened here is never closed");
  return out;
}

inline std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string format_text(const std::string& s) {
  const bool bare = !s.empty() && s.find_first_of(" \t#\"{}") == std::string::npos;
  return bare ? s : "\"" + s + "\"";
}

inline void write_fields(std::ostream& os,
                         const std::vector<std::pair<std::string, SceneValue>>& fields) {
  for (const auto& [k, v] : fields) {
    os << ' ' << k;
    if (v.is_text) {
      os << ' ' << format_text(v.text);
    } else {
      for (double x : v.numbers) os << ' ' << format_number(x);
    }
  }
}

inline void write_directive(std::ostream& os, const Directive& d, int depth) {
  os << std::string(static_cast<std::size_t>(depth) * 2, ' ') << d.keyword;
  write_fields(os, d.fields);
  if (!d.children.empty() || d.keyword == "union" || d.keyword == "intersection" ||
      d.keyword == "subtraction" || d.keyword == "grid") {
    os << " {\n";
    for (const Directive& c : d.children) write_directive(os, c, depth + 1);
    os << std::string(static_cast<std::size_t>(depth) * 2, ' ') << "}\n";
  } else {
    os << '\n';
  }
}

inline std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  int number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    ++number;
    std::vector<Token> tokens = tokenize(text.substr(start, end - start), number);
    if (!tokens.empty()) lines.push_back({number, std::move(tokens)});
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

/// Sections of a document after the version header.
inline std::map<std::string, std::pair<int, std::vector<Line>>> split_sections(
    std::string_view text, const std::set<std::string>& allowed) {
  const std::vector<Line> lines = split_lines(text);
  if (lines.empty()) throw ParseError(1, "empty document");
  const Line& head = lines.front();
  if (head.tokens.size() != 2 || head.tokens[0].text != "version") {
    throw ParseError(head.number, "expected 'version 1' header");
  }
  if (head.tokens[1].text != "1") {
    throw ParseError(head.number, "unsupported version " + head.tokens[1].text);
  }
  std::map<std::string, std::pair<int, std::vector<Line>>> sections;
  std::string current;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const Line& ln = lines[i];
    const std::string& t = ln.tokens[0].text;
    if (!t.empty() && t.front() == '[') {
      if (ln.tokens.size() != 1 || t.back() != ']' || t.size() < 3) {
        throw ParseError(ln.number, "malformed section header");
      }
      current = t.substr(1, t.size() - 2);
      if (!allowed.contains(current)) {
        throw ParseError(ln.number, "unknown section [" + current + "]");
      }
      if (sections.contains(current)) {
        throw ParseError(ln.number, "duplicate section [" + current + "]");
      }
      sections[current].first = ln.number;
      continue;
    }
    if (current.empty()) throw ParseError(ln.number, "content before the first section");
    sections[current].second.push_back(ln);
  }
  return sections;
}

inline void check_geometry(const Directive& d) {
  if (d.keyword == "subtraction" && d.children.size() != 2) {
    throw ParseError(d.line, "subtraction needs exactly two children");
  }
  if ((d.keyword == "union" || d.keyword == "intersection" || d.keyword == "grid") &&
      d.children.empty()) {
    throw ParseError(d.line, d.keyword + " needs at least one child");
  }
  for (const Directive& c : d.children) check_geometry(c);
}

inline void check_positive(const Directive& d, std::string_view key) {
  for (double v : d.value(key).numbers) {
    if (!(v > 0.0)) throw ParseError(d.line, d.keyword + "." + std::string(key) + " must be positive");
  }
}

inline void check_unit(const Directive& d, std::string_view key) {
  for (double v : d.value(key).numbers) {
    if (v < 0.0 || v > 1.0) {
      throw ParseError(d.line, d.keyword + "." + std::string(key) + " must lie in [0, 1]");
    }
  }
}

inline std::vector<Directive> parse_light_lines(const std::vector<Line>& lines) {
  std::size_t pos = 0;
  std::vector<Directive> light = parse_directives(lines, pos, light_schema(), false, 0);
  for (const Directive& d : light) {
    if (d.keyword == "lobe") {
      check_positive(d, "sharpness");
      if (length(d.vec3("axis")) == 0.0) throw ParseError(d.line, "lobe.axis must be nonzero");
      for (double a : d.value("amplitude").numbers) {
        if (a < 0.0) throw ParseError(d.line, "lobe.amplitude must be non-negative");
      }
    } else if (d.keyword != "envmap") {
      if (d.integer("count") < 1) throw ParseError(d.line, d.keyword + ".count must be >= 1");
    } else if (d.integer("lobes") < 1) {
      throw ParseError(d.line, "envmap.lobes must be >= 1");
    }
  }
  return light;
}

}  // namespace detail

inline SceneDescription parse_scene(std::string_view text) {
  using namespace detail;
  auto sections =
      split_sections(text, {"geometry", "materials", "light", "cameras", "render"});
  // Sections are checked in document order before reporting absent ones.
  std::vector<std::pair<int, std::string>> order;
  for (const auto& [name, body] : sections) order.emplace_back(body.first, name);
  std::sort(order.begin(), order.end());
  SceneDescription desc;
  const auto parse_section = [&](const std::string& name) {
    const auto& [line, lines] = sections[name];
    std::size_t pos = 0;
    if (name == "geometry") {
      std::vector<Directive> roots =
          parse_directives(lines, pos, geometry_schema(), false, line);
      if (roots.size() != 1) {
        throw ParseError(line, "[geometry] needs exactly one root node; wrap several in union");
      }
      desc.geometry = std::move(roots.front());
      check_geometry(desc.geometry);
    } else if (name == "materials") {
      desc.materials = parse_directives(lines, pos, materials_schema(), false, line);
      if (desc.materials.empty()) throw ParseError(line, "[materials] is empty");
      std::set<int> ids;
      for (const Directive& d : desc.materials) {
        const int id = d.integer("id");
        if (id < 0) throw ParseError(d.line, "material id must be >= 0");
        if (!ids.insert(id).second) {
          throw ParseError(d.line, "material id " + std::to_string(id) + " defined twice");
        }
        if (d.keyword != "neural") {
          for (const char* key : {"albedo", "roughness", "metallic", "specular"}) {
            check_unit(d, key);
          }
        }
      }
    } else if (name == "light") {
      desc.light = parse_light_lines(lines);
      if (desc.light.empty()) throw ParseError(line, "[light] is empty");
    } else if (name == "cameras") {
      desc.cameras = parse_directives(lines, pos, cameras_schema(), false, line);
      if (desc.cameras.empty()) throw ParseError(line, "[cameras] is empty");
    }
  };
  for (const auto& entry : order) parse_section(entry.second);
  for (const char* name : {"geometry", "materials", "light", "cameras"}) {
    if (!sections.contains(name)) {
      throw ParseError(1, std::string("missing section [") + name + "]");
    }
  }
  // Render settings are single `key value...` lines.
  std::vector<std::pair<std::string, SceneValue>> render_fields;
  {
    std::vector<Token> merged;
    int first_line = 1;
    std::set<std::string> seen;
    if (auto it = sections.find("render"); it != sections.end()) {
      first_line = it->second.first;
      for (const Line& ln : it->second.second) {
        const std::string& key = ln.tokens[0].text;
        if (!seen.insert(key).second) throw ParseError(ln.number, "render: repeated key '" + key + "'");
        // Validate each line on its own for a precise line number.
        std::vector<KeySpec> one;
        for (const KeySpec& k : render_schema()) {
          if (k.key == key) one.push_back(k);
        }
        if (one.empty()) throw ParseError(ln.number, "render: unknown key '" + key + "'");
        parse_fields("render", one, ln.tokens, 0, ln.number);
        merged.insert(merged.end(), ln.tokens.begin(), ln.tokens.end());
      }
    }
    render_fields = parse_fields("render", render_schema(), merged, 0, first_line);
  }
  Directive r{"render", render_fields, {}, 0};
  RenderConfig& cfg = desc.render.config;
  cfg.n_samples = r.integer("samples");
  cfg.d = r.integer("subdivision");
  cfg.levels = r.integer("levels");
  cfg.spp = r.integer("spp");
  cfg.seed = static_cast<std::uint64_t>(r.number("seed"));
  if (r.number("seed") < 0 || r.number("seed") != std::floor(r.number("seed"))) {
    throw ParseError(1, "render.seed must be a non-negative integer");
  }
  const std::string& mode = r.text("mode");
  if (mode == "explicit") {
    cfg.mode = IntersectMode::kExplicit;
  } else if (mode == "weighted") {
    cfg.mode = IntersectMode::kWeightedSum;
  } else {
    throw ParseError(1, "render.mode must be explicit or weighted");
  }
  desc.render.background = r.vec3("background");
  try {
    validate(cfg);
  } catch (const InputError& e) {
    throw ParseError(sections.contains("render") ? sections["render"].first : 1, e.what());
  }
  return desc;
}

inline std::string serialize(const SceneDescription& d) {
  using namespace detail;
  std::ostringstream os;
  os << "version " << d.version << "\n[geometry]\n";
  write_directive(os, d.geometry, 0);
  os << "[materials]\n";
  for (const Directive& m : d.materials) write_directive(os, m, 0);
  os << "[light]\n";
  for (const Directive& l : d.light) write_directive(os, l, 0);
  os << "[cameras]\n";
  for (const Directive& c : d.cameras) write_directive(os, c, 0);
  const RenderConfig& c = d.render.config;
  os << "[render]\n"
     << "samples " << c.n_samples << "\n"
     << "subdivision " << c.d << "\n"
     << "levels " << c.levels << "\n"
     << "spp " << c.spp << "\n"
     << "mode " << (c.mode == IntersectMode::kExplicit ? "explicit" : "weighted") << "\n"
     << "background " << format_number(d.render.background.x) << ' '
     << format_number(d.render.background.y) << ' ' << format_number(d.render.background.z)
     << "\n"
     << "seed " << c.seed << "\n";
  return os.str();
}

/// A lobes file: a version header and one [light] section.
inline std::vector<Directive> parse_lobes(std::string_view text) {
  auto sections = detail::split_sections(text, {"light"});
  if (!sections.contains("light")) throw ParseError(1, "missing section [light]");
  return detail::parse_light_lines(sections["light"].second);
}

inline std::string serialize_lobes(const SgMixture& lobes) {
  std::ostringstream os;
  os << "version 1\n[light]\n";
  for (const SgLobe& g : lobes) {
    os << "lobe axis";
    for (int a = 0; a < 3; ++a) os << ' ' << detail::format_number(g.axis[a]);
    os << " sharpness " << detail::format_number(g.sharpness) << " amplitude";
    for (int c = 0; c < 3; ++c) os << ' ' << detail::format_number(g.amplitude[c]);
    os << '\n';
  }
  return os.str();
}

struct BuiltScene {
  Scene scene;
  std::vector<Camera> cameras;
  RenderConfig config;
};

/// Random lobes: uniform axes, log-uniform sharpness, uniform amplitudes.
inline SgMixture random_light(int count, std::uint64_t seed, double sharp_min, double sharp_max,
                              double amp_min, double amp_max) {
  if (count < 1) throw InputError("random light: count must be >= 1");
  if (!(sharp_min > 0.0) || sharp_max < sharp_min || amp_min < 0.0 || amp_max < amp_min) {
    throw InputError("random light: invalid ranges");
  }
  Rng rng(stream_seed(seed, {0x6c69676874ULL}));
  SgMixture lobes;
  for (int i = 0; i < count; ++i) {
    SgLobe g;
    g.axis = uniform_sphere(rng.uniform(), rng.uniform());
    g.sharpness = sharp_min * std::pow(sharp_max / sharp_min, rng.uniform());
    for (int c = 0; c < 3; ++c) g.amplitude[c] = amp_min + (amp_max - amp_min) * rng.uniform();
    lobes.push_back(g);
  }
  return lobes;
}

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline SdfField build_geometry(const Directive& d, std::set<int>& ids) {
  const auto material = [&] {
    const int id = d.integer("material");
    if (id < 0) throw ParseError(d.line, "material id must be >= 0");
    ids.insert(id);
    return id;
  };
  if (d.keyword == "sphere") {
    check_positive(d, "radius");
    return SdfField(sdf::Sphere{d.vec3("center"), d.number("radius")}, material());
  }
  if (d.keyword == "box") {
    check_positive(d, "half_extents");
    return SdfField(sdf::Box{d.vec3("center"), d.vec3("half_extents")}, material());
  }
  if (d.keyword == "torus") {
    check_positive(d, "major_radius");
    check_positive(d, "minor_radius");
    return SdfField(sdf::Torus{d.vec3("center"), d.number("major_radius"),
                               d.number("minor_radius")},
                    material());
  }
  if (d.keyword == "plane") {
    const Vec3d n = d.vec3("normal");
    if (length(n) == 0.0) throw ParseError(d.line, "plane.normal must be nonzero");
    return SdfField(sdf::Plane{normalize(n), d.number("offset")}, material());
  }
  if (d.keyword == "neural") {
    check_positive(d, "radius");
    return make_neural_sdf(d.number("radius"), static_cast<std::uint64_t>(d.integer("seed")),
                           d.integer("pe"), d.integer("width"), d.integer("layers"), material());
  }
  std::vector<SdfField> children;
  for (const Directive& c : d.children) children.push_back(build_geometry(c, ids));
  if (d.keyword == "union") return make_union(std::move(children));
  if (d.keyword == "intersection") return make_intersection(std::move(children));
  if (d.keyword == "subtraction") return make_subtraction(children[0], children[1]);
  // grid: sampled from its children over their padded bounding box.
  const SdfField source = children.size() == 1 ? children[0] : make_union(children);
  const auto bounds = bounding_sphere(source);
  if (!bounds) throw ParseError(d.line, "grid children must be bounded");
  const int res = d.integer("resolution");
  if (res < 2) throw ParseError(d.line, "grid.resolution must be >= 2");
  const double half = bounds->radius + d.number("padding");
  const double cell = 2.0 * half / (res - 1);
  return make_grid_sdf(source, bounds->center - splat(half), cell, res, material());
}

inline Material material_values(const Directive& d) {
  const Vec3d a = d.vec3("albedo");
  return Material{a, d.number("roughness"), d.number("metallic"), d.number("specular")};
}

inline ParameterField build_material(const Directive& d) {
  if (d.keyword == "constant") return make_constant_field(material_values(d));
  if (d.keyword == "grid") {
    check_positive(d, "cell");
    const int res = d.integer("resolution");
    if (res < 2) throw ParseError(d.line, "grid.resolution must be >= 2");
    return make_grid_field(d.vec3("origin"), d.number("cell"), res, material_values(d));
  }
  return make_neural_field(static_cast<std::uint64_t>(d.integer("seed")), d.integer("pe"),
                           d.integer("width"), d.integer("layers"));
}

}  // namespace detail

/// Builds the light of `directives`, resolving envmap paths against `base`.
inline SgMixture build_light(const std::vector<Directive>& directives,
                             const std::filesystem::path& base = {}) {
  SgMixture light;
  for (const Directive& d : directives) {
    if (d.keyword == "lobe") {
      light.push_back(SgLobe{normalize(d.vec3("axis")), d.number("sharpness"), d.vec3("amplitude")});
    } else if (d.keyword == "fibonacci") {
      const SgMixture l = init_light(d.integer("count"), d.vec3("energy"), d.number("sharpness"));
      light.insert(light.end(), l.begin(), l.end());
    } else if (d.keyword == "random") {
      const SgMixture l = random_light(
          d.integer("count"), static_cast<std::uint64_t>(d.integer("seed")),
          d.number("sharpness_min"), d.number("sharpness_max"), d.number("amplitude_min"),
          d.number("amplitude_max"));
      light.insert(light.end(), l.begin(), l.end());
    } else {
      const ImageBuffer map = load_image(detail::resolve(base, d.text("path")).string());
      const EnvmapFit fit = fit_envmap_to_sg(map, d.integer("lobes"));
      light.insert(light.end(), fit.lobes.begin(), fit.lobes.end());
    }
  }
  return light;
}

inline std::vector<Camera> build_cameras(const std::vector<Directive>& directives) {
  std::vector<Camera> cams;
  for (const Directive& d : directives) {
    const double fov = d.number("fov") * kPi / 180.0;
    const double ortho = d.number("ortho");
    if (d.keyword == "canonical") {
      const auto six = canonical_six_views(d.number("distance"), d.integer("resolution"), fov, ortho);
      cams.insert(cams.end(), six.begin(), six.end());
    } else if (d.keyword == "orbit") {
      cams.push_back(orbit_camera(d.number("distance"), d.number("azimuth"),
                                  d.number("elevation"), d.integer("resolution"), fov, ortho));
    } else {
      Camera c;
      c.position = d.vec3("position");
      c.target = d.vec3("target");
      c.up = d.vec3("up");
      c.fov_y = fov;
      c.ortho_half_height = ortho;
      c.width = d.integer("width");
      c.height = d.integer("height");
      cams.push_back(c);
    }
    try {
      validate(cams.back());
    } catch (const InputError& e) {
      throw ParseError(d.line, e.what());
    }
  }
  return cams;
}

inline BuiltScene build_scene(const SceneDescription& desc,
                              const std::filesystem::path& base = {}) {
  BuiltScene out;
  std::set<int> used;
  out.scene.geometry = detail::build_geometry(desc.geometry, used);
  int max_id = -1;
  for (const Directive& d : desc.materials) max_id = std::max(max_id, d.integer("id"));
  out.scene.materials.resize(static_cast<std::size_t>(max_id + 1));
  std::vector<bool> defined(out.scene.materials.size(), false);
  for (const Directive& d : desc.materials) {
    const auto id = static_cast<std::size_t>(d.integer("id"));
    out.scene.materials[id] = detail::build_material(d);
    defined[id] = true;
  }
  for (int id : used) {
    if (static_cast<std::size_t>(id) >= defined.size() || !defined[static_cast<std::size_t>(id)]) {
      throw ParseError(desc.geometry.line, "geometry uses undefined material " + std::to_string(id));
    }
  }
  for (std::size_t i = 0; i < defined.size(); ++i) {
    // Gaps in the id range get a default constant so indices stay dense.
    if (!defined[i]) out.scene.materials[i] = make_constant_field(Material{});
  }
  out.scene.light = build_light(desc.light, base);
  out.scene.background = desc.render.background;
  out.cameras = build_cameras(desc.cameras);
  out.config = desc.render.config;
  return out;
}

inline SceneDescription load_scene_description(const std::filesystem::path& path) {
  return parse_scene(read_file(path.string()));
}

}  // namespace sgpbr
