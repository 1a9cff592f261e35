#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

namespace mmia {

using json = nlohmann::json;

// Compact serialization with lexicographically sorted object keys. The
// library's default object type is an ordered map, so dump() is already
// canonical; this wrapper pins the settings in one place.
std::string canonical_dump(const json& value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Reads every non-empty line of a JSONL file. Missing file -> empty list.
std::vector<json> read_jsonl(const std::filesystem::path& path);

// Pulls the first JSON object or array out of a model reply, tolerating
// code fences and surrounding prose. Throws protocol_error when none parses.
json extract_json_document(std::string_view text);

// Wall clock for record timestamps; frozen clocks (replay mode) always
// return the epoch so serialized output is reproducible.
struct Clock {
  bool frozen = false;
  std::string now() const;
};

// Append-only JSONL writer; writes are serialized and flushed per record.
class JsonlWriter {
 public:
  JsonlWriter() = default;
  explicit JsonlWriter(std::filesystem::path path);

  void append(const json& record);
  const std::filesystem::path& path() const { return path_; }
  bool is_open() const { return !path_.empty(); }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

}  // namespace mmia
