#include "xray/host_trace.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "xray/error.hpp"

namespace xray::host {

namespace {

std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || v < 0) return std::nullopt;
  return v;
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c == ' ' || c == '\t' || c == '(' || c == ')' || c == '{' || c == '}' || c == '@') return false;
  return true;
}

HostTraceLine parse_kernel_body(std::string_view rest, const std::string& source, std::size_t lineno) {
  std::size_t spaces = 0;
  while (spaces < rest.size() && rest[spaces] == ' ') ++spaces;
  if (spaces % 2 != 0) throw ParseError(source, lineno, "indent must be two spaces per level");
  HostTraceLine out;
  out.line = lineno;
  out.depth = static_cast<std::uint32_t>(spaces / 2);
  std::string_view body = rest.substr(spaces);

  if (!body.empty() && body.front() == '}') {
    if (body.size() < 3 || body[1] != ' ') throw ParseError(source, lineno, "closing brace needs a duration");
    auto d = parse_int(body.substr(2));
    if (!d) throw ParseError(source, lineno, "bad duration `" + std::string(body.substr(2)) + "`");
    out.kind = LineKind::FuncExit;
    out.duration_ns = *d;
    return out;
  }
  constexpr std::string_view kOpen = "() {";
  if (body.size() > kOpen.size() && body.substr(body.size() - kOpen.size()) == kOpen) {
    auto name = body.substr(0, body.size() - kOpen.size());
    if (!valid_name(name)) throw ParseError(source, lineno, "bad function name `" + std::string(name) + "`");
    out.kind = LineKind::FuncEntry;
    out.name = std::string(name);
    return out;
  }
  constexpr std::string_view kLeaf = "(); ";
  if (auto pos = body.find(kLeaf); pos != std::string_view::npos) {
    auto name = body.substr(0, pos);
    auto dur = body.substr(pos + kLeaf.size());
    if (!valid_name(name)) throw ParseError(source, lineno, "bad function name `" + std::string(name) + "`");
    auto d = parse_int(dur);
    if (!d) throw ParseError(source, lineno, "bad duration `" + std::string(dur) + "`");
    out.kind = LineKind::FuncLeaf;
    out.name = std::string(name);
    out.duration_ns = *d;
    return out;
  }
  throw ParseError(source, lineno, "unknown line shape");
}

struct Frame {
  std::string name;
  std::int64_t entry;
  std::uint32_t indent;
};

class Reconstructor {
 public:
  explicit Reconstructor(const std::string& source) : source_(source) {}

  void anchor(const HostTraceLine& l) {
    std::int64_t epoch = *l.epoch_ns;
    if (in_syscall_) {
      if (epoch < cursor_)
        throw ParseError(source_, l.line, "anchor epoch " + std::to_string(epoch) +
                                              " precedes end of previous syscall at " + std::to_string(cursor_));
      close_open_frames(0, epoch, l.line, "closed at next syscall anchor");
      end_syscall();
    }
    in_syscall_ = true;
    syscall_name_ = *l.name;
    cursor_ = epoch;
    emit(HostEventKind::SyscallEnter, syscall_name_, epoch, 0, false);
  }

  void kernel(const HostTraceLine& l) {
    if (!in_syscall_) throw ParseError(source_, l.line, "orphan kernel event");
    auto open = static_cast<std::uint32_t>(stack_.size());
    if (l.kind == LineKind::FuncExit) {
      if (open == 0) throw ParseError(source_, l.line, "unbalanced closing brace");
      if (l.depth >= open) throw ParseError(source_, l.line, "closing brace indented deeper than open frames");
      close_open_frames(l.depth + 1, cursor_, l.line, "closing brace missing");
      Frame f = std::move(stack_.back());
      stack_.pop_back();
      std::int64_t end = f.entry + *l.duration_ns;
      if (end < cursor_)
        throw ParseError(source_, l.line,
                         "duration of " + f.name + " is shorter than the durations of its children");
      cursor_ = end;
      emit(HostEventKind::FuncExit, f.name, end, f.indent + 1, false);
      return;
    }
    if (l.depth > open) throw ParseError(source_, l.line, "indentation skips a level");
    close_open_frames(l.depth, cursor_, l.line, "closing brace missing");
    emit(HostEventKind::FuncEnter, *l.name, cursor_, l.depth + 1, false);
    if (l.kind == LineKind::FuncEntry) {
      stack_.push_back(Frame{*l.name, cursor_, l.depth});
    } else {
      cursor_ += *l.duration_ns;
      emit(HostEventKind::FuncExit, *l.name, cursor_, l.depth + 1, false);
    }
  }

  HostTrace finish(std::size_t last_line) {
    if (in_syscall_) {
      close_open_frames(0, cursor_, last_line, "closed at end of trace");
      end_syscall();
    }
    return std::move(out_);
  }

 private:
  void emit(HostEventKind kind, const std::string& name, std::int64_t ts, std::uint32_t depth, bool synthetic) {
    out_.events.push_back(HostEvent{kind, name, Timestamp{ts}, depth, 0, synthetic});
  }

  // Closes frames whose indent is >= `keep`, innermost first, at `at`.
  void close_open_frames(std::uint32_t keep, std::int64_t at, std::size_t line, const char* why) {
    while (stack_.size() > keep) {
      Frame f = std::move(stack_.back());
      stack_.pop_back();
      std::int64_t end = std::max({at, cursor_, f.entry});
      cursor_ = end;
      emit(HostEventKind::FuncExit, f.name, end, f.indent + 1, true);
      out_.warnings.push_back(Warning{line, "unclosed " + f.name + ": " + why});
    }
  }

  void end_syscall() {
    emit(HostEventKind::SyscallExit, syscall_name_, cursor_, 0, false);
    in_syscall_ = false;
  }

  const std::string& source_;
  HostTrace out_;
  std::vector<Frame> stack_;
  bool in_syscall_ = false;
  std::string syscall_name_;
  std::int64_t cursor_ = 0;
};

}  // namespace

std::vector<HostTraceLine> parse_host_lines(std::istream& in, const std::string& source) {
  std::vector<HostTraceLine> out;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos || line[first] == '#') continue;

    if (line.size() >= 2 && line[0] == 'S' && line[1] == ' ') {
      auto rest = line.substr(2);
      auto at = rest.rfind('@');
      if (at == std::string_view::npos) throw ParseError(source, lineno, "syscall anchor needs `name@epoch_ns`");
      auto name = rest.substr(0, at);
      if (!valid_name(name)) throw ParseError(source, lineno, "bad syscall name `" + std::string(name) + "`");
      auto epoch = parse_int(rest.substr(at + 1));
      if (!epoch) throw ParseError(source, lineno, "non-numeric epoch `" + std::string(rest.substr(at + 1)) + "`");
      HostTraceLine l;
      l.kind = LineKind::SyscallAnchor;
      l.name = std::string(name);
      l.epoch_ns = *epoch;
      l.line = lineno;
      out.push_back(std::move(l));
    } else if (line.size() >= 2 && line[0] == 'K' && line[1] == ' ') {
      out.push_back(parse_kernel_body(line.substr(2), source, lineno));
    } else {
      throw ParseError(source, lineno, "unknown line shape");
    }
  }
  return out;
}

std::vector<HostTraceLine> parse_host_lines(std::string_view text, const std::string& source) {
  std::istringstream in{std::string(text)};
  return parse_host_lines(in, source);
}

HostTrace reconstruct_epochs(const std::vector<HostTraceLine>& lines, const std::string& source) {
  Reconstructor r(source);
  for (const auto& l : lines) {
    if (l.kind == LineKind::SyscallAnchor) {
      r.anchor(l);
    } else {
      r.kernel(l);
    }
  }
  return r.finish(lines.empty() ? 0 : lines.back().line);
}

HostTrace parse_host_trace(std::istream& in, const std::string& source) {
  return reconstruct_epochs(parse_host_lines(in, source), source);
}

HostTrace parse_host_trace(std::string_view text, const std::string& source) {
  return reconstruct_epochs(parse_host_lines(text, source), source);
}

std::string format_line(const HostTraceLine& line) {
  if (line.kind == LineKind::SyscallAnchor) return "S " + *line.name + "@" + std::to_string(*line.epoch_ns);
  std::string out = "K " + std::string(2 * line.depth, ' ');
  switch (line.kind) {
    case LineKind::FuncEntry: return out + *line.name + "() {";
    case LineKind::FuncLeaf: return out + *line.name + "(); " + std::to_string(*line.duration_ns);
    case LineKind::FuncExit: return out + "} " + std::to_string(*line.duration_ns);
    default: return out;
  }
}

}  // namespace xray::host
