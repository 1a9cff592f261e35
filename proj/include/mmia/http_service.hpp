#pragma once

#include <memory>
#include <string>

#include "mmia/error.hpp"
#include "mmia/json_util.hpp"
#include "mmia/workspace.hpp"

namespace mmia {

// HTTP status for an error code; 500 for anything unexpected.
int http_status(ErrorCode code);

// application/problem+json body: {type, title, status, detail, code}, plus
// line/column/expected for rule parse errors.
json problem_body(const std::string& code, int status, const std::string& detail);

// REST surface over a workspace. Mutating requests honour an
// Idempotency-Key header: a retry with the same key and body replays the
// stored response, a different body under the same key is a state_error.
class HttpService {
 public:
  explicit HttpService(Workspace& workspace);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  // Binds config host:port (0 picks a free port) and serves on a
  // background thread with `workers` request threads. Returns the port.
  // startup_error when the address cannot be bound.
  int start();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mmia
