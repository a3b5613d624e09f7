// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Text grounding: coordinates on a 0..1000 scale, the <ref>/<box> markup,
// task prompts and rect/polygon/point location forms.
//
// Markup grammar (no whitespace is emitted; the parser tolerates spaces
// around numbers, commas and between </ref> and <box>):
//
//   span    := "<ref>" TEXT "</ref>" [ "<box>" tuples "</box>" ]
//   tuples  := tuple ( "," tuple )*
//   tuple   := "(" INT "," INT ")"          INT in [0, 1000]
//
// One tuple is a point, two tuples are a rectangle (x1,y1),(x2,y2) with
// x1 <= x2 and y1 <= y2, three or more are polygon vertices.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "textmonkey/error.hpp"

namespace textmonkey {

inline constexpr int kCoordScale = 1000;

struct NormalizedPoint {
  int x = 0;
  int y = 0;
  friend bool operator==(const NormalizedPoint&, const NormalizedPoint&) = default;
};

struct NormalizedBox {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  bool valid() const {
    auto in = [](int v) { return v >= 0 && v <= kCoordScale; };
    return in(x1) && in(y1) && in(x2) && in(y2) && x1 <= x2 && y1 <= y2;
  }

  /// Same box with corners ordered so that x1 <= x2 and y1 <= y2.
  NormalizedBox canonical() const {
    return {std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2)};
  }

  double area() const { return static_cast<double>(x2 - x1) * static_cast<double>(y2 - y1); }

  friend bool operator==(const NormalizedBox&, const NormalizedBox&) = default;
};

struct Polygon {
  std::vector<NormalizedPoint> vertices;

  NormalizedBox bounds() const {
    NormalizedBox b{kCoordScale, kCoordScale, 0, 0};
    for (const auto& p : vertices) {
      b.x1 = std::min(b.x1, p.x);
      b.y1 = std::min(b.y1, p.y);
      b.x2 = std::max(b.x2, p.x);
      b.y2 = std::max(b.y2, p.y);
    }
    return b;
  }

  friend bool operator==(const Polygon&, const Polygon&) = default;
};

using Location = std::variant<NormalizedBox, Polygon, NormalizedPoint>;

struct GroundedSpan {
  std::string text;
  std::optional<Location> location;

  friend bool operator==(const GroundedSpan&, const GroundedSpan&) = default;
};

// ---------------------------------------------------------------------------
// Coordinates

/// How pixel coordinates map onto the 0..1000 scale.
enum class CoordinateConvention {
  per_axis,  // x / W_r, y / H_r
  literal,   // x / H_r, y / W_r: the formula as printed, axes swapped
};

/// Rounds half away from zero.
inline int round_half_away(double v) { return static_cast<int>(std::round(v)); }

inline NormalizedPoint normalize_coord(double x, double y, double width, double height,
                                       CoordinateConvention convention = CoordinateConvention::per_axis) {
  if (!(width > 0.0) || !(height > 0.0)) throw ParameterError("image dimensions must be positive");
  if (!(x >= 0.0 && x <= width) || !(y >= 0.0 && y <= height)) {
    throw ParameterError("pixel (" + std::to_string(x) + ", " + std::to_string(y) + ") lies outside the " +
                         std::to_string(width) + "x" + std::to_string(height) + " image");
  }
  const double dx = convention == CoordinateConvention::per_axis ? width : height;
  const double dy = convention == CoordinateConvention::per_axis ? height : width;
  return {std::clamp(round_half_away(x * kCoordScale / dx), 0, kCoordScale),
          std::clamp(round_half_away(y * kCoordScale / dy), 0, kCoordScale)};
}

struct PixelPoint {
  long x = 0;
  long y = 0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

inline PixelPoint denormalize_coord(int nx, int ny, double width, double height) {
  if (nx < 0 || nx > kCoordScale || ny < 0 || ny > kCoordScale) {
    throw ParameterError("normalized coordinate (" + std::to_string(nx) + ", " + std::to_string(ny) +
                         ") outside [0, 1000]");
  }
  if (!(width > 0.0) || !(height > 0.0)) throw ParameterError("image dimensions must be positive");
  return {std::lround(nx * width / kCoordScale), std::lround(ny * height / kCoordScale)};
}

/// Center of the box, each coordinate rounded half away from zero.
inline NormalizedPoint box_to_point(const NormalizedBox& box) {
  const NormalizedBox b = box.canonical();
  return {round_half_away((b.x1 + b.x2) / 2.0), round_half_away((b.y1 + b.y2) / 2.0)};
}

inline double iou(const NormalizedBox& a, const NormalizedBox& b) {
  const double ix = std::max(0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// ---------------------------------------------------------------------------
// Markup

inline constexpr std::string_view kReservedTags[] = {"<ref>", "</ref>", "<box>", "</box>"};

inline void validate_location(const Location& loc) {
  auto in = [](int v) { return v >= 0 && v <= kCoordScale; };
  if (const auto* b = std::get_if<NormalizedBox>(&loc)) {
    if (!b->valid()) throw ParameterError("invalid box");
  } else if (const auto* p = std::get_if<Polygon>(&loc)) {
    if (p->vertices.size() < 3) throw ParameterError("polygon needs at least three vertices");
    for (const auto& v : p->vertices)
      if (!in(v.x) || !in(v.y)) throw ParameterError("polygon vertex outside [0, 1000]");
  } else {
    const auto& pt = std::get<NormalizedPoint>(loc);
    if (!in(pt.x) || !in(pt.y)) throw ParameterError("point outside [0, 1000]");
  }
}

inline std::string serialize_grounded(const GroundedSpan& span) {
  for (auto tag : kReservedTags) {
    if (span.text.find(tag) != std::string::npos) {
      throw ParameterError("span text contains reserved markup '" + std::string(tag) + "'");
    }
  }
  std::string out = "<ref>" + span.text + "</ref>";
  if (!span.location) return out;
  validate_location(*span.location);
  auto tuple = [](int x, int y) { return "(" + std::to_string(x) + "," + std::to_string(y) + ")"; };
  out += "<box>";
  if (const auto* b = std::get_if<NormalizedBox>(&*span.location)) {
    out += tuple(b->x1, b->y1) + "," + tuple(b->x2, b->y2);
  } else if (const auto* p = std::get_if<Polygon>(&*span.location)) {
    for (std::size_t i = 0; i < p->vertices.size(); ++i) {
      if (i) out += ",";
      out += tuple(p->vertices[i].x, p->vertices[i].y);
    }
  } else {
    const auto& pt = std::get<NormalizedPoint>(*span.location);
    out += tuple(pt.x, pt.y);
  }
  return out + "</box>";
}

inline std::string serialize_grounded(const std::vector<GroundedSpan>& spans) {
  std::string out;
  for (const auto& s : spans) out += serialize_grounded(s);
  return out;
}

namespace detail {

class TupleParser {
 public:
  TupleParser(std::string_view text, std::size_t base) : s_(text), base_(base) {}

  std::vector<NormalizedPoint> parse() {
    std::vector<NormalizedPoint> pts;
    skip_ws();
    if (pos_ == s_.size()) throw ParseError("empty <box>", base_ + pos_);
    while (true) {
      expect('(');
      const int x = number();
      expect(',');
      const int y = number();
      expect(')');
      pts.push_back({x, y});
      skip_ws();
      if (pos_ == s_.size()) break;
      expect(',');
    }
    return pts;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != c) {
      throw ParseError(std::string("malformed coordinate tuple: expected '") + c + "'", base_ + pos_);
    }
    ++pos_;
  }

  int number() {
    skip_ws();
    const std::size_t start = pos_;
    bool negative = false;
    if (pos_ < s_.size() && s_[pos_] == '-') {
      negative = true;
      ++pos_;
    }
    long v = 0;
    std::size_t digits = 0;
    while (pos_ < s_.size() && s_[pos_] >= '0' && s_[pos_] <= '9') {
      v = std::min<long>(v * 10 + (s_[pos_] - '0'), 1'000'000);
      ++pos_;
      ++digits;
    }
    if (!digits) throw ParseError("malformed coordinate tuple: expected a number", base_ + start);
    if (negative) v = -v;
    if (v < 0 || v > kCoordScale) throw ParseError("coordinate " + std::to_string(v) + " outside [0, 1000]", base_ + start);
    return static_cast<int>(v);
  }

  std::string_view s_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Extracts every <ref>…</ref> (optionally followed by <box>…</box>) left to
/// right. Refs without a box become text-only spans; text outside refs and
/// boxes that follow no ref are ignored.
inline std::vector<GroundedSpan> parse_grounded(std::string_view s) {
  std::vector<GroundedSpan> spans;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = s.find("<ref>", pos);
    if (open == std::string_view::npos) break;
    const std::size_t text_begin = open + 5;
    const std::size_t close = s.find("</ref>", text_begin);
    if (close == std::string_view::npos) throw ParseError("unterminated <ref>", open);
    GroundedSpan span;
    span.text = std::string(s.substr(text_begin, close - text_begin));
    pos = close + 6;

    std::size_t look = pos;
    while (look < s.size() && s[look] == ' ') ++look;
    if (s.substr(look, 5) == "<box>") {
      const std::size_t body = look + 5;
      const std::size_t end = s.find("</box>", body);
      if (end == std::string_view::npos) throw ParseError("unterminated <box>", look);
      const auto pts = detail::TupleParser(s.substr(body, end - body), body).parse();
      if (pts.size() == 1) {
        span.location = pts.front();
      } else if (pts.size() == 2) {
        const NormalizedBox b{pts[0].x, pts[0].y, pts[1].x, pts[1].y};
        if (!b.valid()) throw ParseError("box corners are not ordered (x1 <= x2, y1 <= y2)", body);
        span.location = b;
      } else {
        span.location = Polygon{pts};
      }
      pos = end + 6;
    }
    spans.push_back(std::move(span));
  }
  return spans;
}

// ---------------------------------------------------------------------------
// Prompts

enum class PromptTask { ReadAllText, TextSpotting, OriginalTask, PositionOfText, TextRecognition, VQAGrounding };

inline constexpr std::string_view kGroundingSuffix =
    "Provide the location coordinates of the answer when answering the question.";

/// Task prompt. OriginalTask and VQAGrounding substitute the question;
/// PositionOfText substitutes it for the placeholder text when given.
inline std::string build_prompt(PromptTask task, const std::optional<std::string>& question = std::nullopt) {
  auto need_question = [&]() -> const std::string& {
    if (!question || question->empty()) throw ParameterError("this prompt task requires a question");
    return *question;
  };
  switch (task) {
    case PromptTask::ReadAllText:
      return "Read all the text in the image.";
    case PromptTask::TextSpotting:
      return "OCR with grounding:";
    case PromptTask::OriginalTask:
      return need_question() + ". Answer:";
    case PromptTask::PositionOfText:
      return serialize_grounded(GroundedSpan{question.value_or("text"), std::nullopt});
    case PromptTask::TextRecognition:
      return "<ref>This</ref><box>(x1,y1),(x2,y2)</box> is";
    case PromptTask::VQAGrounding:
      return need_question() + ". " + std::string(kGroundingSuffix);
  }
  throw ParameterError("unknown prompt task");
}

/// Text-recognition prompt for a concrete box.
inline std::string build_recognition_prompt(const NormalizedBox& box) {
  return serialize_grounded(GroundedSpan{"This", Location{box}}) + " is";
}

inline const std::vector<std::pair<std::string, PromptTask>>& prompt_task_names() {
  static const std::vector<std::pair<std::string, PromptTask>> names = {
      {"read-all", PromptTask::ReadAllText},     {"text-spotting", PromptTask::TextSpotting},
      {"original", PromptTask::OriginalTask},    {"position", PromptTask::PositionOfText},
      {"recognition", PromptTask::TextRecognition}, {"vqa-grounding", PromptTask::VQAGrounding}};
  return names;
}

inline PromptTask parse_prompt_task(const std::string& name) {
  for (const auto& [n, t] : prompt_task_names())
    if (n == name) return t;
  std::string valid;
  for (const auto& [n, t] : prompt_task_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ParameterError("unknown prompt task '" + name + "' (valid: " + valid + ")");
}

/// Random valid span with a word-like text and a uniformly chosen location
/// kind (none, rect, polygon, point). Used for round-trip corpora.
inline GroundedSpan generate_span(std::mt19937_64& rng) {
  static constexpr std::string_view kAlphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .,:;!?-()'";
  std::uniform_int_distribution<int> coord(0, kCoordScale);
  std::uniform_int_distribution<std::size_t> len(1, 12), ch(0, kAlphabet.size() - 1);
  GroundedSpan span;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) span.text.push_back(kAlphabet[ch(rng)]);
  switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
    case 0:
      break;
    case 1: {
      const int a = coord(rng), b = coord(rng), c = coord(rng), d = coord(rng);
      span.location = NormalizedBox{std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
      break;
    }
    case 2: {
      Polygon p;
      const std::size_t k = std::uniform_int_distribution<std::size_t>(3, 8)(rng);
      for (std::size_t i = 0; i < k; ++i) p.vertices.push_back({coord(rng), coord(rng)});
      span.location = std::move(p);
      break;
    }
    default:
      span.location = NormalizedPoint{coord(rng), coord(rng)};
  }
  return span;
}

// ---------------------------------------------------------------------------
// JSONL span records: {"text": ..., "kind": "rect"|"polygon"|"point"|"none", "coords": [...]}

inline nlohmann::json span_to_json(const GroundedSpan& span) {
  nlohmann::json j = {{"text", span.text}};
  std::vector<int> coords;
  std::string kind = "none";
  if (span.location) {
    if (const auto* b = std::get_if<NormalizedBox>(&*span.location)) {
      kind = "rect";
      coords = {b->x1, b->y1, b->x2, b->y2};
    } else if (const auto* p = std::get_if<Polygon>(&*span.location)) {
      kind = "polygon";
      for (const auto& v : p->vertices) coords.insert(coords.end(), {v.x, v.y});
    } else {
      const auto& pt = std::get<NormalizedPoint>(*span.location);
      kind = "point";
      coords = {pt.x, pt.y};
    }
  }
  j["kind"] = kind;
  j["coords"] = coords;
  return j;
}

inline GroundedSpan span_from_json(const nlohmann::json& j) {
  GroundedSpan span;
  try {
    span.text = j.at("text").get<std::string>();
    const std::string kind = j.value("kind", std::string("none"));
    const std::vector<int> c = j.value("coords", std::vector<int>{});
    if (kind == "rect") {
      if (c.size() != 4) throw ParameterError("rect needs 4 coordinates");
      span.location = NormalizedBox{c[0], c[1], c[2], c[3]};
    } else if (kind == "point") {
      if (c.size() != 2) throw ParameterError("point needs 2 coordinates");
      span.location = NormalizedPoint{c[0], c[1]};
    } else if (kind == "polygon") {
      if (c.size() < 6 || c.size() % 2) throw ParameterError("polygon needs an even count of at least 6 coordinates");
      Polygon p;
      for (std::size_t i = 0; i < c.size(); i += 2) p.vertices.push_back({c[i], c[i + 1]});
      span.location = std::move(p);
    } else if (kind != "none") {
      throw ParameterError("unknown span kind '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("malformed span record: ") + e.what());
  }
  if (span.location) validate_location(*span.location);
  return span;
}

}  // namespace textmonkey
