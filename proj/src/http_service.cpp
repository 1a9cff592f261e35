#include "mmia/http_service.hpp"

#include <map>
#include <set>
#include <thread>

#include "httplib.h"
#include "mmia/reasoning.hpp"

namespace mmia {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation_error:
    case ErrorCode::parse_error:
    case ErrorCode::precondition_violation:
    case ErrorCode::template_error:
    case ErrorCode::evaluation_error:
    case ErrorCode::incomplete_input:
    case ErrorCode::budget_exhausted:
      return 422;
    case ErrorCode::configuration_error:
      return 400;
    case ErrorCode::not_found:
      return 404;
    case ErrorCode::state_error:
    case ErrorCode::ledger_error:
      return 409;
    case ErrorCode::backend_error:
    case ErrorCode::protocol_error:
      return 502;
    case ErrorCode::audit_error:
    case ErrorCode::index_error:
    case ErrorCode::io_error:
    case ErrorCode::startup_error:
      return 500;
  }
  return 500;
}

json problem_body(const std::string& code, int status, const std::string& detail) {
  std::string title = code;
  std::replace(title.begin(), title.end(), '-', ' ');
  return json{{"type", "urn:mmia:problem:" + code},
              {"title", title},
              {"status", status},
              {"detail", detail},
              {"code", code}};
}

namespace {

using httplib::Request;
using httplib::Response;

void send_json(Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(2), "application/json");
}

void send_problem(Response& res, const json& problem) {
  res.status = problem.at("status").get<int>();
  res.set_content(problem.dump(2), "application/problem+json");
}

json parse_body(const Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::validation_error, std::string("request body is not JSON: ") + e.what());
  }
}

Rational rational_field(const json& body, const char* key, const std::string& fallback) {
  if (!body.contains(key)) return Rational::parse(fallback);
  const json& v = body.at(key);
  if (v.is_string()) return Rational::parse(v.get<std::string>());
  if (v.is_number()) return Rational::parse(v.dump());
  fail(ErrorCode::validation_error, std::string(key) + " must be a number");
}

std::int64_t integral(const Rational& r, const char* key) {
  if (r.den() != 1) fail(ErrorCode::validation_error, std::string(key) + " must be a whole number");
  return r.num();
}

// Stored response of a completed mutating request.
struct StoredResponse {
  std::uint64_t fingerprint = 0;
  int status = 0;
  std::string body;
  std::string content_type;
};

class IdempotencyStore {
 public:
  explicit IdempotencyStore(const std::filesystem::path& file) {
    for (const json& r : read_jsonl(file)) {
      stored_[r.at("key").get<std::string>()] =
          StoredResponse{std::stoull(r.at("fingerprint").get<std::string>()), r.at("status").get<int>(),
                         r.at("body").get<std::string>(), r.at("content_type").get<std::string>()};
    }
    log_ = std::make_unique<JsonlWriter>(file);
  }

  // nullopt: caller owns the key and must call finish() or abandon().
  std::optional<StoredResponse> begin(const std::string& key, std::uint64_t fingerprint) {
    std::lock_guard lock(mutex_);
    if (auto it = stored_.find(key); it != stored_.end()) {
      if (it->second.fingerprint != fingerprint) {
        fail(ErrorCode::state_error, "idempotency key reused for a different request");
      }
      return it->second;
    }
    if (!in_flight_.insert(key).second) {
      fail(ErrorCode::state_error, "a request with this idempotency key is in progress");
    }
    return std::nullopt;
  }

  void finish(const std::string& key, StoredResponse response) {
    std::lock_guard lock(mutex_);
    in_flight_.erase(key);
    log_->append(json{{"key", key},
                      {"fingerprint", std::to_string(response.fingerprint)},
                      {"status", response.status},
                      {"body", response.body},
                      {"content_type", response.content_type}});
    stored_[key] = std::move(response);
  }

  void abandon(const std::string& key) {
    std::lock_guard lock(mutex_);
    in_flight_.erase(key);
  }

 private:
  std::mutex mutex_;
  std::map<std::string, StoredResponse> stored_;
  std::set<std::string> in_flight_;
  std::unique_ptr<JsonlWriter> log_;
};

}  // namespace

struct HttpService::Impl {
  Workspace& ws;
  httplib::Server server;
  IdempotencyStore idempotency;
  std::thread thread;
  int port = 0;

  explicit Impl(Workspace& w) : ws(w), idempotency(w.config().data_dir / "idempotency.jsonl") {}

  using Handler = std::function<void(const Request&, Response&)>;

  bool authorized(const Request& req) const {
    const std::string& key = ws.config().api_key;
    if (key.empty()) return true;
    if (req.get_header_value("X-API-Key") == key) return true;
    return req.get_header_value("Authorization") == "Bearer " + key;
  }

  Handler guarded(Handler fn, bool open = false) {
    return [this, fn, open](const Request& req, Response& res) {
      try {
        if (!open && !authorized(req)) {
          send_problem(res, problem_body("unauthorized", 401, "missing or wrong API key"));
          return;
        }
        fn(req, res);
      } catch (const ParseError& e) {
        json p = problem_body(std::string(to_string(ErrorCode::parse_error)), 422, e.what());
        p["line"] = e.line();
        p["column"] = e.column();
        p["expected"] = e.expected();
        send_problem(res, p);
      } catch (const Error& e) {
        const std::string code(to_string(e.code()));
        send_problem(res, problem_body(code, http_status(e.code()), e.what()));
      } catch (const json::exception& e) {
        send_problem(res, problem_body(std::string(to_string(ErrorCode::validation_error)), 422, e.what()));
      } catch (const std::exception& e) {
        send_problem(res, problem_body("internal-error", 500, e.what()));
      }
    };
  }

  // Replays the stored response for a repeated Idempotency-Key.
  Handler mutating(Handler fn) {
    return guarded([this, fn](const Request& req, Response& res) {
      const std::string key = req.get_header_value("Idempotency-Key");
      if (key.empty()) {
        fn(req, res);
        return;
      }
      const std::uint64_t fp = fnv1a64(req.method + " " + req.path + "\n" + req.body);
      if (auto stored = idempotency.begin(key, fp)) {
        res.status = stored->status;
        res.set_content(stored->body, stored->content_type);
        res.set_header("Idempotent-Replayed", "true");
        return;
      }
      try {
        fn(req, res);
      } catch (...) {
        idempotency.abandon(key);
        throw;
      }
      // Failures are not stored so a retry can succeed.
      if (res.status >= 400) {
        idempotency.abandon(key);
      } else {
        idempotency.finish(key, StoredResponse{fp, res.status, res.body, res.get_header_value("Content-Type")});
      }
    });
  }

  TaskRecord task_or_404(const Request& req) {
    const std::string id = req.matches[1];
    auto rec = ws.find_task(id);
    if (!rec) fail(ErrorCode::not_found, "no task " + id);
    return *rec;
  }

  void routes() {
    server.Get("/healthz", guarded(
                               [](const Request&, Response& res) {
                                 send_json(res, 200, json{{"status", "ok"}, {"version", version()}});
                               },
                               true));

    server.Post("/tasks", mutating([this](const Request& req, Response& res) {
                  const TaskRecord rec = ws.submit_task(ws.task_from_request(parse_body(req)));
                  send_json(res, 201, task_summary(rec));
                }));
    server.Get("/tasks", guarded([this](const Request&, Response& res) {
                 json tasks = json::array();
                 for (const auto& id : ws.task_ids()) {
                   if (auto rec = ws.find_task(id)) tasks.push_back(task_summary(*rec));
                 }
                 send_json(res, 200, json{{"tasks", tasks}});
               }));
    server.Get(R"(/tasks/([^/]+))", guarded([this](const Request& req, Response& res) {
                 send_json(res, 200, task_summary(task_or_404(req)));
               }));
    server.Get(R"(/tasks/([^/]+)/log)", guarded([this](const Request& req, Response& res) {
                 send_json(res, 200, to_json(task_or_404(req).log));
               }));
    server.Get(R"(/tasks/([^/]+)/audit)", guarded([this](const Request& req, Response& res) {
                 send_json(res, 200, to_json(task_or_404(req).consensus));
               }));

    server.Post("/kb/documents", mutating([this](const Request& req, Response& res) {
                  const json body = parse_body(req);
                  Document doc{body.value("id", ""), body.value("text", "")};
                  const IngestResult r = ws.ingest_document(doc, body.value("scenario", ""));
                  json candidates = json::array();
                  for (const auto& a : r.candidates) candidates.push_back(to_json(a));
                  send_json(res, 201,
                            json{{"document_id", doc.id},
                                 {"candidates", candidates},
                                 {"review_entries", r.review_entries},
                                 {"usage", to_json(r.usage)}});
                }));
    server.Get("/kb/axioms", guarded([this](const Request& req, Response& res) {
                 std::optional<AxiomStatus> status;
                 const std::string s = req.get_param_value("status");
                 if (!s.empty() && s != "all") status = status_from_string(s);
                 json axioms = json::array();
                 for (const auto& a : ws.list_axioms(status)) axioms.push_back(to_json(a));
                 send_json(res, 200, json{{"axioms", axioms}});
               }));

    server.Get("/review/queue", guarded([this](const Request& req, Response& res) {
                 std::optional<EntryStatus> status = EntryStatus::open;
                 const std::string s = req.get_param_value("status");
                 if (s == "all") status.reset();
                 else if (!s.empty()) status = entry_status_from_string(s);
                 std::optional<QueueKind> kind;
                 if (const std::string k = req.get_param_value("kind"); !k.empty()) kind = queue_kind_from_string(k);
                 json entries = json::array();
                 for (const auto& e : ws.queue().list(status, kind)) entries.push_back(to_json(e));
                 send_json(res, 200, json{{"entries", entries}});
               }));
    server.Get(R"(/review/([^/]+))", guarded([this](const Request& req, Response& res) {
                 const std::string id = req.matches[1];
                 auto e = ws.queue().find(id);
                 if (!e) fail(ErrorCode::not_found, "no review entry " + id);
                 send_json(res, 200, to_json(*e));
               }));
    server.Post(R"(/review/([^/]+))", mutating([this](const Request& req, Response& res) {
                  const ReviewOutcome r = ws.resolve_review(req.matches[1], parse_body(req));
                  json body{{"entry", to_json(r.entry)}};
                  body["axiom"] = r.axiom ? to_json(*r.axiom) : json(nullptr);
                  body["follow_up_entry"] = r.follow_up_entry ? json(*r.follow_up_entry) : json(nullptr);
                  send_json(res, 200, body);
                }));

    server.Post("/bench/run", mutating([this](const Request& req, Response& res) {
                  const json body = parse_body(req);
                  const EngineMode mode = engine_mode_from_string(body.value("mode", "mmia"));
                  std::vector<BenchmarkCase> suite;
                  if (body.contains("cases")) {
                    for (const json& c : body.at("cases")) suite.push_back(case_from_json(c));
                  } else if (body.contains("suite_file")) {
                    suite = read_suite(body.at("suite_file").get<std::string>());
                  } else {
                    const std::uint64_t seed = body.value("seed", ws.config().seed);
                    const int size = body.value("size", kDefaultSuiteSize);
                    std::vector<std::string> scenarios;
                    if (body.contains("scenario")) scenarios.push_back(body.at("scenario").get<std::string>());
                    else scenarios = body.value("scenarios", std::vector<std::string>{});
                    if (scenarios.empty()) {
                      fail(ErrorCode::validation_error, "give cases, suite_file, scenario or scenarios");
                    }
                    for (const auto& s : scenarios) {
                      for (auto& c : generate_suite(s, seed, size)) suite.push_back(std::move(c));
                    }
                  }
                  const BenchmarkRun run = ws.run_bench(suite, mode);
                  json metrics = to_json(run.metrics);
                  metrics["run_id"] = run.run_id;
                  send_json(res, 201, json{{"run_id", run.run_id}, {"metrics", metrics}});
                }));
    server.Get(R"(/bench/([^/]+)/metrics)", guarded([this](const Request& req, Response& res) {
                 const std::string id = req.matches[1];
                 auto m = ws.bench_metrics(id);
                 if (!m) fail(ErrorCode::not_found, "no benchmark run " + id);
                 send_json(res, 200, *m);
               }));

    // Pure computation: safe to repeat, no idempotency bookkeeping needed.
    server.Post("/cost/simulate", guarded([](const Request& req, Response& res) {
                  const json body = parse_body(req);
                  PhaseSimConfig c;
                  c.denovo_tokens = integral(rational_field(body, "denovo", "3500"), "denovo");
                  c.match_tokens = integral(rational_field(body, "match", "500"), "match");
                  c.match_fraction = rational_field(body, "fraction", "0.8");
                  c.n_initial = integral(rational_field(body, "n_initial", "100"), "n_initial");
                  c.n_mature = integral(rational_field(body, "n_mature", "100"), "n_mature");
                  const PhaseReport report = simulate_phases(c);
                  json out = to_json(report);
                  out["table"] = format_phase_table(report);
                  send_json(res, 200, out);
                }));

    server.set_error_handler([](const Request& req, Response& res) {
      if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
      const std::string code = res.status == 404 ? "not-found" : "http-error";
      send_problem(res, problem_body(code, res.status, "no route for " + req.method + " " + req.path));
      return httplib::Server::HandlerResponse::Handled;
    });
  }
};

HttpService::HttpService(Workspace& workspace) : impl_(std::make_unique<Impl>(workspace)) {
  const int workers = workspace.config().workers;
  impl_->server.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<size_t>(workers)); };
  impl_->routes();
}

HttpService::~HttpService() { stop(); }

int HttpService::start() {
  require(!impl_->thread.joinable(), "service already started");
  const auto& c = impl_->ws.config();
  if (c.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(c.host);
    if (impl_->port < 0) fail(ErrorCode::startup_error, "cannot bind " + c.host);
  } else {
    if (!impl_->server.bind_to_port(c.host, c.port)) {
      fail(ErrorCode::startup_error, "cannot bind " + c.host + ":" + std::to_string(c.port) + " (port busy?)");
    }
    impl_->port = c.port;
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void HttpService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

bool HttpService::running() const { return impl_->server.is_running(); }

}  // namespace mmia
