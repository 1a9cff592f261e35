#include "mmia/json_util.hpp"

#include <chrono>
#include <ctime>
#include <sstream>

#include "mmia/error.hpp"

namespace mmia {

std::string canonical_dump(const json& value) {
  return value.dump(-1, ' ', false, json::error_handler_t::strict);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorCode::io_error, "cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    fail(ErrorCode::io_error, "cannot write " + path.string());
  }
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::vector<json> records;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return records;
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      records.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      fail(ErrorCode::io_error,
           path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

json extract_json_document(std::string_view text) {
  auto try_parse = [](std::string_view candidate, json& out) {
    try {
      out = json::parse(candidate);
      return out.is_object() || out.is_array();
    } catch (const json::parse_error&) {
      return false;
    }
  };
  json parsed;
  if (try_parse(text, parsed)) {
    return parsed;
  }
  for (char open : {'{', '['}) {
    const char close = open == '{' ? '}' : ']';
    const auto begin = text.find(open);
    const auto end = text.rfind(close);
    if (begin != std::string_view::npos && end != std::string_view::npos && end > begin) {
      if (try_parse(text.substr(begin, end - begin + 1), parsed)) {
        return parsed;
      }
    }
  }
  fail(ErrorCode::protocol_error, "reply does not contain a JSON document");
}

std::string Clock::now() const {
  if (frozen) {
    return "1970-01-01T00:00:00Z";
  }
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&t, &utc);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buffer;
}

JsonlWriter::JsonlWriter(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) {
    std::filesystem::create_directories(path_.parent_path());
  }
}

void JsonlWriter::append(const json& record) {
  if (path_.empty()) {
    return;
  }
  const std::string line = canonical_dump(record) + "\n";
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) {
    fail(ErrorCode::io_error, "cannot append to " + path_.string());
  }
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
}

}  // namespace mmia
