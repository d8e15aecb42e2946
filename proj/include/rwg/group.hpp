#pragma once

// Concrete countable groups and their elements.
//
// Every element carries a canonical byte key: a kind tag, a little-endian
// u32 payload length and the payload. The identity of every kind has an
// empty payload. Keys are injective within one group, so they double as
// associative-map keys for measures, balls and trajectories.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "rwg/errors.hpp"

namespace rwg {

enum class GroupKind : std::uint8_t {
  lattice = 1,
  cyclic = 2,
  dihedral = 3,
  free_group = 4,
  wreath = 5,
};

/// Declared growth metadata: polynomial of a given degree, or exponential.
struct GrowthDegree {
  bool exponential = false;
  int degree = 0;

  friend bool operator==(const GrowthDegree&, const GrowthDegree&) = default;

  std::string to_string() const {
    return exponential ? std::string("exponential") : std::to_string(degree);
  }
};

struct GroupSpec {
  GroupKind kind = GroupKind::lattice;
  int dim = 1;                 // integer-lattice(d)
  std::uint64_t modulus = 2;   // cyclic(m)
  int rank = 1;                // free(rank)
  std::shared_ptr<const GroupSpec> lamp;
  std::shared_ptr<const GroupSpec> base;
  std::optional<GrowthDegree> declared_growth;

  static GroupSpec integer_lattice(int d) {
    GroupSpec s;
    s.kind = GroupKind::lattice;
    s.dim = d;
    return s;
  }
  static GroupSpec cyclic_group(std::uint64_t m) {
    GroupSpec s;
    s.kind = GroupKind::cyclic;
    s.modulus = m;
    return s;
  }
  static GroupSpec infinite_dihedral() {
    GroupSpec s;
    s.kind = GroupKind::dihedral;
    return s;
  }
  static GroupSpec free_group(int rank) {
    GroupSpec s;
    s.kind = GroupKind::free_group;
    s.rank = rank;
    return s;
  }
  static GroupSpec wreath_product(GroupSpec lamp, GroupSpec base) {
    GroupSpec s;
    s.kind = GroupKind::wreath;
    s.lamp = std::make_shared<const GroupSpec>(std::move(lamp));
    s.base = std::make_shared<const GroupSpec>(std::move(base));
    return s;
  }

  bool is_finite() const {
    switch (kind) {
      case GroupKind::cyclic: return true;
      case GroupKind::wreath: return lamp->is_finite() && base->is_finite();
      default: return false;
    }
  }

  bool is_trivial() const { return kind == GroupKind::cyclic && modulus == 1; }

  /// Growth degree implied by the kind. Used to check declared metadata.
  GrowthDegree natural_growth() const {
    switch (kind) {
      case GroupKind::lattice: return {false, dim};
      case GroupKind::cyclic: return {false, 0};
      case GroupKind::dihedral: return {false, 1};
      case GroupKind::free_group:
        return rank >= 2 ? GrowthDegree{true, 0} : GrowthDegree{false, 1};
      case GroupKind::wreath: {
        if (lamp->is_trivial()) return base->natural_growth();
        if (!base->is_finite()) return {true, 0};
        GrowthDegree g = lamp->natural_growth();
        if (g.exponential) return g;
        return {false, g.degree * static_cast<int>(base->modulus)};
      }
    }
    return {};
  }

  GrowthDegree growth() const { return declared_growth.value_or(natural_growth()); }

  void validate(const std::string& field = "group") const {
    switch (kind) {
      case GroupKind::lattice:
        if (dim < 1) throw ConfigError(field + ".dim", "lattice dimension must be >= 1, got " + std::to_string(dim));
        break;
      case GroupKind::cyclic:
        if (modulus < 1) throw ConfigError(field + ".modulus", "cyclic modulus must be >= 1");
        break;
      case GroupKind::dihedral: break;
      case GroupKind::free_group:
        if (rank < 1 || rank > 26)
          throw ConfigError(field + ".rank", "free rank must be in [1,26], got " + std::to_string(rank));
        break;
      case GroupKind::wreath:
        if (!lamp) throw ConfigError(field + ".lamp", "wreath product needs a lamp group");
        if (!base) throw ConfigError(field + ".base", "wreath product needs a base group");
        lamp->validate(field + ".lamp");
        base->validate(field + ".base");
        break;
    }
    if (declared_growth && !(*declared_growth == natural_growth())) {
      throw ConfigError(field + ".growth", "declared growth " + declared_growth->to_string() +
                                               " inconsistent with kind (expected " +
                                               natural_growth().to_string() + ")");
    }
  }

  std::string to_string() const {
    switch (kind) {
      case GroupKind::lattice: return dim == 1 ? "Z" : "Z^" + std::to_string(dim);
      case GroupKind::cyclic: return "Z/" + std::to_string(modulus);
      case GroupKind::dihedral: return "Dinf";
      case GroupKind::free_group: return "F" + std::to_string(rank);
      case GroupKind::wreath: return "(" + lamp->to_string() + " wr " + base->to_string() + ")";
    }
    return "?";
  }

  friend bool operator==(const GroupSpec& a, const GroupSpec& b) { return a.to_string() == b.to_string(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <class Int>
Int parse_int(std::string_view s, const std::string& what) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  Int v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ConfigError(what, "expected an integer, got '" + std::string(s) + "'");
  return v;
}

// Splits on `sep` at bracket depth zero.
inline std::vector<std::string_view> split_top(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '(' || c == '{' || c == '[') ++depth;
    else if (c == ')' || c == '}' || c == ']') --depth;
    else if (c == sep && depth == 0) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  out.push_back(s.substr(start));
  return out;
}

inline std::size_t find_top(std::string_view s, char c) {
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char ch = s[i];
    if (ch == '(' || ch == '{' || ch == '[') ++depth;
    else if (ch == ')' || ch == '}' || ch == ']') --depth;
    else if (ch == c && depth == 0) return i;
  }
  return std::string_view::npos;
}

// Recursive-descent parser for the shorthand "Z^3", "Z/2 wr Z^3", "F2", "Dinf".
class SpecParser {
 public:
  explicit SpecParser(std::string_view text) : text_(text) {}

  GroupSpec parse() {
    GroupSpec s = parse_wreath();
    skip_ws();
    if (pos_ != text_.size()) fail("trailing input");
    return s;
  }

 private:
  GroupSpec parse_wreath() {
    GroupSpec left = parse_primary();
    while (true) {
      skip_ws();
      if (text_.substr(pos_, 2) == "wr") {
        pos_ += 2;
        GroupSpec right = parse_primary();
        left = GroupSpec::wreath_product(std::move(left), std::move(right));
      } else {
        return left;
      }
    }
  }

  GroupSpec parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end");
    if (text_[pos_] == '(') {
      ++pos_;
      GroupSpec s = parse_wreath();
      skip_ws();
      if (pos_ >= text_.size() || text_[pos_] != ')') fail("expected ')'");
      ++pos_;
      return s;
    }
    if (text_.substr(pos_, 4) == "Dinf") {
      pos_ += 4;
      return GroupSpec::infinite_dihedral();
    }
    if (text_[pos_] == 'F') {
      ++pos_;
      return GroupSpec::free_group(static_cast<int>(read_number()));
    }
    if (text_[pos_] == 'Z') {
      ++pos_;
      if (pos_ < text_.size() && text_[pos_] == '/') {
        ++pos_;
        return GroupSpec::cyclic_group(read_number());
      }
      if (pos_ < text_.size() && text_[pos_] == '^') {
        ++pos_;
        return GroupSpec::integer_lattice(static_cast<int>(read_number()));
      }
      return GroupSpec::integer_lattice(1);
    }
    fail("unknown group token");
    return {};
  }

  std::uint64_t read_number() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("expected a number");
    return parse_int<std::uint64_t>(text_.substr(start, pos_ - start), "group");
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError("group", why + " at offset " + std::to_string(pos_) + " in '" + std::string(text_) + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline GroupSpec parse_group_spec(std::string_view text) {
  GroupSpec s = detail::SpecParser(text).parse();
  s.validate();
  return s;
}

class Element;
class Group;

namespace detail {

struct GroupNode;
struct WreathData;

struct DihedralPayload {
  std::int64_t translation = 0;
  bool flip = false;
};

using Payload = std::variant<std::vector<std::int64_t>,       // lattice
                             std::uint64_t,                   // cyclic
                             DihedralPayload,                 // infinite dihedral
                             std::vector<std::int32_t>,       // free word, letters ±(i+1)
                             std::shared_ptr<const WreathData>>;

}  // namespace detail

struct LampEntry;

/// Immutable group element. Cheap to copy: payloads are small vectors or shared.
class Element {
 public:
  Element() = default;

  bool valid() const noexcept { return node_ != nullptr; }
  const std::string& key() const noexcept { return key_; }
  GroupKind kind() const noexcept { return static_cast<GroupKind>(key_[0]); }
  bool is_identity() const noexcept { return key_.size() == 5; }
  Group group() const;

  std::span<const std::int64_t> coords() const { return std::get<0>(payload_); }
  std::uint64_t residue() const { return std::get<1>(payload_); }
  std::int64_t translation() const { return std::get<2>(payload_).translation; }
  bool flipped() const { return std::get<2>(payload_).flip; }
  std::span<const std::int32_t> letters() const { return std::get<3>(payload_); }
  inline std::span<const LampEntry> lamps() const;
  inline const Element& position() const;

  friend inline bool same_group(const Element& a, const Element& b);
  friend bool operator==(const Element& a, const Element& b) { return a.key_ == b.key_ && same_group(a, b); }
  friend bool operator<(const Element& a, const Element& b) { return a.key_ < b.key_; }

 private:
  friend class Group;
  friend struct detail::GroupNode;
  friend Element make_element_(std::shared_ptr<const detail::GroupNode>, detail::Payload);

  std::shared_ptr<const detail::GroupNode> node_;
  detail::Payload payload_;
  std::string key_;
};

/// One non-identity lamp value at a base position.
struct LampEntry {
  Element base;
  Element value;
};

namespace detail {

struct WreathData {
  std::vector<LampEntry> lamps;  // sorted by base key, no identity values
  Element position;
};

struct GroupNode {
  GroupSpec spec;
  std::string name;
  std::shared_ptr<const GroupNode> lamp;
  std::shared_ptr<const GroupNode> base;
};

inline void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint32_t read_u32(std::string_view s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return v;
}
inline std::uint64_t read_u64(std::string_view s, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return v;
}

inline std::string encode_payload(const Payload& p) {
  std::string out;
  switch (p.index()) {
    case 0: {
      const auto& v = std::get<0>(p);
      if (std::all_of(v.begin(), v.end(), [](std::int64_t x) { return x == 0; })) break;
      for (std::int64_t x : v) append_u64(out, static_cast<std::uint64_t>(x));
      break;
    }
    case 1:
      if (std::get<1>(p) != 0) append_u64(out, std::get<1>(p));
      break;
    case 2: {
      const auto& d = std::get<2>(p);
      if (d.translation == 0 && !d.flip) break;
      append_u64(out, static_cast<std::uint64_t>(d.translation));
      out.push_back(d.flip ? 1 : 0);
      break;
    }
    case 3:
      for (std::int32_t l : std::get<3>(p)) append_u32(out, static_cast<std::uint32_t>(l));
      break;
    case 4: {
      const auto& w = *std::get<4>(p);
      if (w.lamps.empty() && w.position.is_identity()) break;
      append_u32(out, static_cast<std::uint32_t>(w.lamps.size()));
      for (const auto& e : w.lamps) {
        out += e.base.key();
        out += e.value.key();
      }
      out += w.position.key();
      break;
    }
  }
  return out;
}

}  // namespace detail

inline Element make_element_(std::shared_ptr<const detail::GroupNode> node, detail::Payload payload) {
  Element e;
  std::string body = detail::encode_payload(payload);
  e.key_.reserve(5 + body.size());
  e.key_.push_back(static_cast<char>(node->spec.kind));
  detail::append_u32(e.key_, static_cast<std::uint32_t>(body.size()));
  e.key_ += body;
  e.node_ = std::move(node);
  e.payload_ = std::move(payload);
  return e;
}

inline bool same_group(const Element& a, const Element& b) {
  return a.node_ == b.node_ || (a.node_ && b.node_ && a.node_->name == b.node_->name);
}

inline std::span<const LampEntry> Element::lamps() const { return std::get<4>(payload_)->lamps; }
inline const Element& Element::position() const { return std::get<4>(payload_)->position; }

/// Handle to a realized group. Copyable; all operations are pure.
class Group {
 public:
  Group() = default;

  /// Builds the handle for a validated spec.
  static Group make(const GroupSpec& spec) {
    spec.validate();
    return Group(build(spec));
  }

  const GroupSpec& spec() const { return node_->spec; }
  GroupKind kind() const { return node_->spec.kind; }
  const std::string& name() const { return node_->name; }
  bool valid() const noexcept { return node_ != nullptr; }
  bool is_wreath() const { return kind() == GroupKind::wreath; }

  Group lamp_group() const {
    require_wreath("lamp_group");
    return Group(node_->lamp);
  }
  Group base_group() const {
    require_wreath("base_group");
    return Group(node_->base);
  }

  friend bool operator==(const Group& a, const Group& b) {
    return a.node_ == b.node_ || (a.node_ && b.node_ && a.node_->name == b.node_->name);
  }

  Element identity() const {
    switch (kind()) {
      case GroupKind::lattice: return make(std::vector<std::int64_t>(spec().dim, 0));
      case GroupKind::cyclic: return make(std::uint64_t{0});
      case GroupKind::dihedral: return make(detail::DihedralPayload{});
      case GroupKind::free_group: return make(std::vector<std::int32_t>{});
      case GroupKind::wreath: {
        auto w = std::make_shared<detail::WreathData>();
        w->position = base_group().identity();
        return make(std::shared_ptr<const detail::WreathData>(std::move(w)));
      }
    }
    return {};
  }

  // -- element constructors ------------------------------------------------

  Element lattice_element(std::vector<std::int64_t> v) const {
    require(GroupKind::lattice, "lattice_element");
    if (static_cast<int>(v.size()) != spec().dim)
      throw UsageError("lattice element of length " + std::to_string(v.size()) + " in " + name());
    return make(std::move(v));
  }

  Element cyclic_element(std::int64_t r) const {
    require(GroupKind::cyclic, "cyclic_element");
    auto m = static_cast<std::int64_t>(spec().modulus);
    std::int64_t x = r % m;
    if (x < 0) x += m;
    return make(static_cast<std::uint64_t>(x));
  }

  Element dihedral_element(std::int64_t translation, bool flip) const {
    require(GroupKind::dihedral, "dihedral_element");
    return make(detail::DihedralPayload{translation, flip});
  }

  /// Letters are ±(i+1) for generator i; the word is freely reduced here.
  Element word(const std::vector<std::int32_t>& letters) const {
    require(GroupKind::free_group, "word");
    std::vector<std::int32_t> out;
    out.reserve(letters.size());
    for (std::int32_t l : letters) {
      if (l == 0 || std::abs(l) > spec().rank) throw UsageError("letter out of range in " + name());
      if (!out.empty() && out.back() == -l) out.pop_back();
      else out.push_back(l);
    }
    return make(std::move(out));
  }

  /// Lamp entries may be unsorted and may contain identity values; duplicate
  /// base positions are rejected.
  Element wreath_element(std::vector<std::pair<Element, Element>> lamps, Element position) const {
    require_wreath("wreath_element");
    Group base = base_group(), lamp = lamp_group();
    if (!(position.group() == base)) throw UsageError("wreath position is not a base element");
    std::vector<LampEntry> entries;
    entries.reserve(lamps.size());
    for (auto& [b, a] : lamps) {
      if (!(b.group() == base) || !(a.group() == lamp)) throw UsageError("lamp entry from a foreign group");
      if (!a.is_identity()) entries.push_back({std::move(b), std::move(a)});
    }
    std::sort(entries.begin(), entries.end(),
              [](const LampEntry& x, const LampEntry& y) { return x.base.key() < y.base.key(); });
    for (std::size_t i = 1; i < entries.size(); ++i)
      if (entries[i].base.key() == entries[i - 1].base.key())
        throw UsageError("duplicate lamp position in wreath element");
    return make_wreath(std::move(entries), std::move(position));
  }

  /// Base group element b embedded as (1, b).
  Element embed_base(const Element& b) const { return wreath_element({}, b); }

  /// Lamp value a placed at base position `at`, walker at base identity.
  Element embed_lamp(const Element& a, const Element& at) const {
    return wreath_element({{at, a}}, base_group().identity());
  }

  // -- algebra ---------------------------------------------------------------

  Element mul(const Element& a, const Element& b) const {
    check_member(a);
    check_member(b);
    switch (kind()) {
      case GroupKind::lattice: {
        auto x = a.coords(), y = b.coords();
        std::vector<std::int64_t> v(x.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] + y[i];
        return make(std::move(v));
      }
      case GroupKind::cyclic: {
        std::uint64_t m = spec().modulus;
        return make(static_cast<std::uint64_t>((a.residue() + b.residue()) % m));
      }
      case GroupKind::dihedral: {
        // (t1,f1)(t2,f2) = (t1 + (-1)^f1 t2, f1 xor f2)
        std::int64_t t = a.translation() + (a.flipped() ? -b.translation() : b.translation());
        return make(detail::DihedralPayload{t, a.flipped() != b.flipped()});
      }
      case GroupKind::free_group: {
        auto x = a.letters(), y = b.letters();
        std::size_t cancel = 0;
        while (cancel < x.size() && cancel < y.size() && x[x.size() - 1 - cancel] == -y[cancel]) ++cancel;
        std::vector<std::int32_t> v(x.begin(), x.end() - static_cast<std::ptrdiff_t>(cancel));
        v.insert(v.end(), y.begin() + static_cast<std::ptrdiff_t>(cancel), y.end());
        return make(std::move(v));
      }
      case GroupKind::wreath: return mul_wreath(a, b);
    }
    return {};
  }

  Element inv(const Element& a) const {
    check_member(a);
    switch (kind()) {
      case GroupKind::lattice: {
        auto x = a.coords();
        std::vector<std::int64_t> v(x.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = -x[i];
        return make(std::move(v));
      }
      case GroupKind::cyclic: {
        std::uint64_t m = spec().modulus;
        return make(static_cast<std::uint64_t>((m - a.residue()) % m));
      }
      case GroupKind::dihedral:
        // a flip is an involution; a translation inverts by negation
        return make(detail::DihedralPayload{a.flipped() ? a.translation() : -a.translation(), a.flipped()});
      case GroupKind::free_group: {
        auto x = a.letters();
        std::vector<std::int32_t> v(x.rbegin(), x.rend());
        for (auto& l : v) l = -l;
        return make(std::move(v));
      }
      case GroupKind::wreath: {
        // (f,b)^-1 = (b^-1 . f^-1, b^-1)
        Group base = base_group(), lamp = lamp_group();
        Element binv = base.inv(a.position());
        std::vector<LampEntry> entries;
        entries.reserve(a.lamps().size());
        for (const auto& e : a.lamps()) entries.push_back({base.mul(binv, e.base), lamp.inv(e.value)});
        sort_lamps(entries);
        return make_wreath(std::move(entries), std::move(binv));
      }
    }
    return {};
  }

  Element pow(const Element& a, std::int64_t n) const {
    Element base = n < 0 ? inv(a) : a;
    Element r = identity();
    for (std::int64_t i = 0; i < (n < 0 ? -n : n); ++i) r = mul(r, base);
    return r;
  }

  Element project_to_base(const Element& a) const {
    require_wreath("project_to_base");
    check_member(a);
    return a.position();
  }

  std::vector<Element> standard_generators() const {
    std::vector<Element> out;
    switch (kind()) {
      case GroupKind::lattice:
        for (int i = 0; i < spec().dim; ++i) {
          for (int s : {1, -1}) {
            std::vector<std::int64_t> v(spec().dim, 0);
            v[i] = s;
            out.push_back(make(std::move(v)));
          }
        }
        break;
      case GroupKind::cyclic:
        if (spec().modulus >= 2) out.push_back(cyclic_element(1));
        if (spec().modulus >= 3) out.push_back(cyclic_element(-1));
        break;
      case GroupKind::dihedral:
        out.push_back(dihedral_element(1, false));
        out.push_back(dihedral_element(-1, false));
        out.push_back(dihedral_element(0, true));
        break;
      case GroupKind::free_group:
        for (int i = 1; i <= spec().rank; ++i) {
          out.push_back(word({i}));
          out.push_back(word({-i}));
        }
        break;
      case GroupKind::wreath: {
        Group base = base_group(), lamp = lamp_group();
        for (const auto& s : lamp.standard_generators()) out.push_back(embed_lamp(s, base.identity()));
        for (const auto& b : base.standard_generators()) out.push_back(embed_base(b));
        break;
      }
    }
    return out;
  }

  // -- text form -------------------------------------------------------------

  std::string format(const Element& a) const {
    check_member(a);
    switch (kind()) {
      case GroupKind::lattice: {
        auto x = a.coords();
        if (x.size() == 1) return std::to_string(x[0]);
        std::string s = "(";
        for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + std::to_string(x[i]);
        return s + ")";
      }
      case GroupKind::cyclic: return std::to_string(a.residue());
      case GroupKind::dihedral:
        return "(" + std::to_string(a.translation()) + "," + (a.flipped() ? "1" : "0") + ")";
      case GroupKind::free_group: {
        if (a.letters().empty()) return "e";
        std::string s;
        for (std::int32_t l : a.letters())
          s.push_back(static_cast<char>(l > 0 ? 'a' + (l - 1) : 'A' + (-l - 1)));
        return s;
      }
      case GroupKind::wreath: {
        Group base = base_group(), lamp = lamp_group();
        std::string s = "{";
        bool first = true;
        for (const auto& e : a.lamps()) {
          s += (first ? "" : ",") + base.format(e.base) + ":" + lamp.format(e.value);
          first = false;
        }
        return s + "}@" + base.format(a.position());
      }
    }
    return "?";
  }

  /// Inverse of `format`; "e" denotes the identity of every kind.
  Element parse_element(std::string_view text) const {
    std::string_view s = detail::trim(text);
    const std::string what = "element '" + std::string(text) + "' in " + name();
    if (s == "e") return identity();
    switch (kind()) {
      case GroupKind::lattice: {
        if (!s.empty() && s.front() == '(') {
          if (s.back() != ')') throw ConfigError(what, "unbalanced parentheses");
          s = s.substr(1, s.size() - 2);
        }
        std::vector<std::int64_t> v;
        for (auto part : detail::split_top(s, ',')) v.push_back(detail::parse_int<std::int64_t>(part, what));
        if (static_cast<int>(v.size()) != spec().dim)
          throw ConfigError(what, "expected " + std::to_string(spec().dim) + " coordinates");
        return make(std::move(v));
      }
      case GroupKind::cyclic: return cyclic_element(detail::parse_int<std::int64_t>(s, what));
      case GroupKind::dihedral: {
        if (s.size() < 2 || s.front() != '(' || s.back() != ')') throw ConfigError(what, "expected (t,f)");
        auto parts = detail::split_top(s.substr(1, s.size() - 2), ',');
        if (parts.size() != 2) throw ConfigError(what, "expected (t,f)");
        auto f = detail::parse_int<int>(parts[1], what);
        if (f != 0 && f != 1) throw ConfigError(what, "flip must be 0 or 1");
        return dihedral_element(detail::parse_int<std::int64_t>(parts[0], what), f == 1);
      }
      case GroupKind::free_group: {
        std::vector<std::int32_t> letters;
        for (char c : s) {
          if (std::isspace(static_cast<unsigned char>(c))) continue;
          int l = 0;
          if (c >= 'a' && c <= 'z') l = c - 'a' + 1;
          else if (c >= 'A' && c <= 'Z') l = -(c - 'A' + 1);
          if (l == 0 || std::abs(l) > spec().rank) throw ConfigError(what, std::string("bad letter '") + c + "'");
          letters.push_back(l);
        }
        return word(letters);
      }
      case GroupKind::wreath: {
        std::size_t at = detail::find_top(s, '@');
        if (at == std::string_view::npos) throw ConfigError(what, "expected {lamps}@position");
        std::string_view lamps = detail::trim(s.substr(0, at));
        if (lamps.size() < 2 || lamps.front() != '{' || lamps.back() != '}')
          throw ConfigError(what, "lamp map must be enclosed in braces");
        Group base = base_group(), lamp = lamp_group();
        std::vector<std::pair<Element, Element>> entries;
        lamps = detail::trim(lamps.substr(1, lamps.size() - 2));
        if (!lamps.empty()) {
          for (auto item : detail::split_top(lamps, ',')) {
            std::size_t colon = detail::find_top(item, ':');
            if (colon == std::string_view::npos) throw ConfigError(what, "lamp entry needs base:value");
            entries.emplace_back(base.parse_element(item.substr(0, colon)), lamp.parse_element(item.substr(colon + 1)));
          }
        }
        return wreath_element(std::move(entries), base.parse_element(s.substr(at + 1)));
      }
    }
    throw ConfigError(what, "unparseable");
  }

  /// Rebuilds an element from its canonical key.
  Element decode_key(std::string_view bytes) const {
    std::size_t used = 0;
    Element e = decode_prefix(bytes, used);
    if (used != bytes.size()) throw ValidationError("trailing bytes after canonical key in " + name());
    return e;
  }

 private:
  explicit Group(std::shared_ptr<const detail::GroupNode> node) : node_(std::move(node)) {}
  friend class Element;

  static std::shared_ptr<const detail::GroupNode> build(const GroupSpec& spec) {
    auto node = std::make_shared<detail::GroupNode>();
    node->spec = spec;
    node->name = spec.to_string();
    if (spec.kind == GroupKind::wreath) {
      node->lamp = build(*spec.lamp);
      node->base = build(*spec.base);
    }
    return node;
  }

  Element make(detail::Payload p) const { return make_element_(node_, std::move(p)); }

  Element make_wreath(std::vector<LampEntry> entries, Element position) const {
    auto w = std::make_shared<detail::WreathData>();
    w->lamps = std::move(entries);
    w->position = std::move(position);
    return make(std::shared_ptr<const detail::WreathData>(std::move(w)));
  }

  static void sort_lamps(std::vector<LampEntry>& v) {
    std::sort(v.begin(), v.end(), [](const LampEntry& x, const LampEntry& y) { return x.base.key() < y.base.key(); });
  }

  // (f,b)(f',b') = (f + b.f', bb') with (b.f')(x) = f'(b^-1 x).
  Element mul_wreath(const Element& a, const Element& b) const {
    Group base = base_group(), lamp = lamp_group();
    const Element& pos = a.position();
    std::vector<LampEntry> moved;
    moved.reserve(b.lamps().size());
    if (pos.is_identity()) {
      moved.assign(b.lamps().begin(), b.lamps().end());
    } else {
      for (const auto& e : b.lamps()) moved.push_back({base.mul(pos, e.base), e.value});
      sort_lamps(moved);
    }
    auto left = a.lamps();
    std::vector<LampEntry> out;
    out.reserve(left.size() + moved.size());
    std::size_t i = 0, j = 0;
    while (i < left.size() || j < moved.size()) {
      if (j == moved.size() || (i < left.size() && left[i].base.key() < moved[j].base.key())) {
        out.push_back(left[i++]);
      } else if (i == left.size() || moved[j].base.key() < left[i].base.key()) {
        out.push_back(std::move(moved[j++]));
      } else {
        Element v = lamp.mul(left[i].value, moved[j].value);
        if (!v.is_identity()) out.push_back({left[i].base, std::move(v)});
        ++i;
        ++j;
      }
    }
    return make_wreath(std::move(out), base.mul(pos, b.position()));
  }

  Element decode_prefix(std::string_view bytes, std::size_t& used) const {
    if (bytes.size() < 5 || static_cast<GroupKind>(bytes[0]) != kind())
      throw ValidationError("canonical key does not belong to " + name());
    std::uint32_t len = detail::read_u32(bytes, 1);
    if (bytes.size() < 5 + static_cast<std::size_t>(len)) throw ValidationError("truncated canonical key");
    std::string_view body = bytes.substr(5, len);
    used = 5 + len;
    if (len == 0) return identity();
    switch (kind()) {
      case GroupKind::lattice: {
        if (body.size() != 8u * spec().dim) throw ValidationError("bad lattice key length");
        std::vector<std::int64_t> v(spec().dim);
        for (int i = 0; i < spec().dim; ++i) v[i] = static_cast<std::int64_t>(detail::read_u64(body, 8 * i));
        return make(std::move(v));
      }
      case GroupKind::cyclic:
        if (body.size() != 8) throw ValidationError("bad cyclic key length");
        return cyclic_element(static_cast<std::int64_t>(detail::read_u64(body, 0)));
      case GroupKind::dihedral:
        if (body.size() != 9) throw ValidationError("bad dihedral key length");
        return dihedral_element(static_cast<std::int64_t>(detail::read_u64(body, 0)), body[8] != 0);
      case GroupKind::free_group: {
        if (body.size() % 4 != 0) throw ValidationError("bad word key length");
        std::vector<std::int32_t> l(body.size() / 4);
        for (std::size_t i = 0; i < l.size(); ++i) l[i] = static_cast<std::int32_t>(detail::read_u32(body, 4 * i));
        return word(l);
      }
      case GroupKind::wreath: {
        Group base = base_group(), lamp = lamp_group();
        std::uint32_t count = detail::read_u32(body, 0);
        std::size_t at = 4, step = 0;
        std::vector<std::pair<Element, Element>> entries;
        for (std::uint32_t i = 0; i < count; ++i) {
          Element b = base.decode_prefix(body.substr(at), step);
          at += step;
          Element v = lamp.decode_prefix(body.substr(at), step);
          at += step;
          entries.emplace_back(std::move(b), std::move(v));
        }
        Element pos = base.decode_prefix(body.substr(at), step);
        if (at + step != body.size()) throw ValidationError("trailing bytes in wreath key");
        return wreath_element(std::move(entries), std::move(pos));
      }
    }
    throw ValidationError("unknown key kind");
  }

  void require(GroupKind k, const char* op) const {
    if (kind() != k) throw UsageError(std::string(op) + " called on " + name());
  }
  void require_wreath(const char* op) const {
    if (!node_ || kind() != GroupKind::wreath)
      throw UsageError(std::string(op) + " requires a wreath product, got " + (node_ ? name() : "<null>"));
  }
  void check_member(const Element& a) const {
    if (!a.valid() || !(a.node_ == node_ || a.node_->name == node_->name))
      throw UsageError("element of " + (a.valid() ? a.node_->name : std::string("<null>")) + " used in " + name());
  }

  std::shared_ptr<const detail::GroupNode> node_;
};

inline Group Element::group() const { return Group(node_); }

// Free-function surface -------------------------------------------------------

inline Group make_group(const GroupSpec& spec) { return Group::make(spec); }

inline Element mul(const Element& a, const Element& b) {
  if (!same_group(a, b)) throw UsageError("mul: operands from different groups");
  return a.group().mul(a, b);
}
inline Element inv(const Element& a) { return a.group().inv(a); }
inline const std::string& canonical_key(const Element& a) { return a.key(); }
inline Element project_to_base(const Element& a) {
  if (!a.valid() || a.kind() != GroupKind::wreath) throw UsageError("project_to_base: not a wreath element");
  return a.position();
}

struct KeyHash {
  std::size_t operator()(const std::string& k) const noexcept { return std::hash<std::string>{}(k); }
};

/// Finite generating set. Identity membership is explicit.
struct GeneratingSet {
  std::vector<Element> elements;
  bool symmetric = false;

  static GeneratingSet standard(const Group& g) { return make(g.standard_generators(), true); }

  static GeneratingSet make(std::vector<Element> elements, bool symmetric) {
    if (symmetric) {
      std::unordered_set<std::string> keys;
      for (const auto& e : elements) keys.insert(e.key());
      for (const auto& e : elements)
        if (!keys.count(inv(e).key())) throw ValidationError("generating set flagged symmetric is not inverse-closed");
    }
    return GeneratingSet{std::move(elements), symmetric};
  }
};

/// Elements of (S ∪ {e})^n, in breadth-first discovery order.
inline std::vector<Element> ball_elements(const GeneratingSet& gen, std::size_t n, std::size_t budget = 10'000'000) {
  if (gen.elements.empty()) throw UsageError("ball of an empty generating set");
  Group g = gen.elements.front().group();
  std::vector<Element> all{g.identity()};
  std::unordered_set<std::string, KeyHash> seen{all.front().key()};
  std::size_t frontier_begin = 0;
  for (std::size_t r = 1; r <= n; ++r) {
    std::size_t frontier_end = all.size();
    for (std::size_t i = frontier_begin; i < frontier_end; ++i) {
      for (const auto& s : gen.elements) {
        Element x = g.mul(all[i], s);
        if (seen.insert(x.key()).second) {
          if (all.size() >= budget)
            throw ResourceError("ball exceeds element budget " + std::to_string(budget) + "; complete up to radius " +
                                    std::to_string(r - 1),
                                static_cast<long long>(r - 1));
          all.push_back(std::move(x));
        }
      }
    }
    frontier_begin = frontier_end;
    if (frontier_begin == all.size()) break;  // ball stabilized (finite group)
  }
  return all;
}

inline std::size_t ball_size(const GeneratingSet& gen, std::size_t n, std::size_t budget = 10'000'000) {
  return ball_elements(gen, n, budget).size();
}

/// The product set R^t = {r_1 ... r_t : r_i in R}; R must contain the identity.
inline std::vector<Element> product_set(const std::vector<Element>& r, std::size_t t, std::size_t budget = 10'000'000) {
  if (r.empty()) throw UsageError("product_set of an empty set");
  bool has_identity = std::any_of(r.begin(), r.end(), [](const Element& e) { return e.is_identity(); });
  if (!has_identity) throw UsageError("product_set requires the identity in R");
  std::vector<Element> nonid;
  for (const auto& e : r)
    if (!e.is_identity()) nonid.push_back(e);
  if (nonid.empty()) return {r.front().group().identity()};
  return ball_elements(GeneratingSet{nonid, false}, t, budget);
}

}  // namespace rwg
