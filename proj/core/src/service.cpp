#include "qagkit/service.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <httplib.h>
#include <toml.hpp>

#include "qagkit/error.hpp"
#include "qagkit/qaaligned.hpp"

namespace qagkit {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr std::string_view kStub = "stub";

Error config_error(const std::string& msg) {
  return Error(Errc::ConfigError, "model registry: " + msg);
}

ModelRegistryEntry entry_from_json(const json& m, std::size_t n) {
  const std::string where = "models[" + std::to_string(n) + "]";
  if (!m.is_object()) throw config_error(where + " is not a table");
  auto str = [&](const char* key, bool required) -> std::optional<std::string> {
    if (!m.contains(key)) {
      if (required) throw config_error(where + " lacks '" + key + "'");
      return std::nullopt;
    }
    if (!m.at(key).is_string()) throw config_error(where + "." + key + " must be a string");
    return m.at(key).get<std::string>();
  };
  ModelRegistryEntry e;
  e.id = *str("id", true);
  if (e.id.empty()) throw config_error(where + ".id is empty");
  try {
    e.language = parse_language(*str("language", true));
  } catch (const Error& err) {
    throw config_error(where + ": " + err.what());
  }
  e.ae_endpoint = *str("ae_endpoint", true);
  e.qg_endpoint = *str("qg_endpoint", true);
  e.perplexity_endpoint = str("perplexity_endpoint", false);

  const DecodingParams defaults;
  int beam = defaults.beam_size();
  double top_p = defaults.top_p();
  int max_len = defaults.max_output_length();
  if (m.contains("beam_size")) {
    if (!m.at("beam_size").is_number_integer()) throw config_error(where + ".beam_size must be an integer");
    beam = m.at("beam_size").get<int>();
  }
  if (m.contains("top_p")) {
    if (!m.at("top_p").is_number()) throw config_error(where + ".top_p must be a number");
    top_p = m.at("top_p").get<double>();
  }
  if (m.contains("max_length")) {
    if (!m.at("max_length").is_number_integer()) throw config_error(where + ".max_length must be an integer");
    max_len = m.at("max_length").get<int>();
  }
  try {
    e.decoding = DecodingParams(beam, top_p, max_len);
  } catch (const Error& err) {
    throw config_error(where + ": " + err.what());
  }
  return e;
}

json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto* a = node.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* f = node.as_floating_point()) return f->get();
  if (const auto* b = node.as_boolean()) return b->get();
  throw config_error("unsupported TOML value type");
}

ServiceResponse from_error(const Error& e) {
  switch (e.code()) {
    case Errc::UnknownMetric:
    case Errc::ProviderUnavailable:
      return error_response(400, errc_name(e.code()), e.what());
    case Errc::BackendError:
      if (e.timed_out()) return error_response(504, "BackendTimeout", e.what());
      return error_response(502, errc_name(e.code()), e.what());
    case Errc::EmptyGeneration:
      return error_response(502, errc_name(e.code()), e.what());
    default:
      return error_response(422, errc_name(e.code()), e.what());
  }
}

Error malformed(const std::string& msg) { return Error(Errc::InvalidArgument, msg); }

const json& field(const json& req, const char* key) {
  if (!req.contains(key)) throw malformed(std::string("missing field '") + key + "'");
  return req.at(key);
}

std::string string_field(const json& req, const char* key) {
  const auto& v = field(req, key);
  if (!v.is_string()) throw malformed(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

DecodingParams decoding_for(const json& req, const DecodingParams& defaults) {
  int beam = defaults.beam_size();
  double top_p = defaults.top_p();
  if (req.contains("beam_size") && !req.at("beam_size").is_null()) {
    if (!req.at("beam_size").is_number_integer()) throw malformed("field 'beam_size' must be an integer");
    beam = req.at("beam_size").get<int>();
  }
  if (req.contains("top_p") && !req.at("top_p").is_null()) {
    if (!req.at("top_p").is_number()) throw malformed("field 'top_p' must be a number");
    top_p = req.at("top_p").get<double>();
  }
  return DecodingParams(beam, top_p, defaults.max_output_length());
}

std::vector<QAPairSet> pair_sets(const json& req, const char* key) {
  const auto& v = field(req, key);
  const std::string name(key);
  if (!v.is_array()) throw malformed("field '" + name + "' must be a list of contexts");
  std::vector<QAPairSet> sets;
  for (std::size_t c = 0; c < v.size(); ++c) {
    const auto& ctx = v[c];
    const std::string where = name + "[" + std::to_string(c) + "]";
    if (!ctx.is_array()) throw malformed(where + " must be a list of [question, answer]");
    QAPairSet set{std::to_string(c), {}};
    for (const auto& p : ctx) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string()) {
        throw malformed(where + " holds an entry that is not [question, answer]");
      }
      set.pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

ojson decoding_json(const DecodingParams& d) {
  return {{"beam_size", d.beam_size()},
          {"top_p", d.top_p()},
          {"max_length", d.max_output_length()}};
}

}  // namespace

// ---------------------------------------------------------------------------

ModelRegistry::ModelRegistry(std::vector<ModelRegistryEntry> entries)
    : entries_(std::move(entries)) {
  std::set<std::string, std::less<>> seen;
  for (const auto& e : entries_) {
    if (!seen.insert(e.id).second) throw config_error("duplicate model id '" + e.id + "'");
  }
}

ModelRegistry ModelRegistry::from_json(const json& j) {
  if (!j.is_object()) throw config_error("top level must be a table");
  std::vector<ModelRegistryEntry> entries;
  if (j.contains("models")) {
    const auto& models = j.at("models");
    if (!models.is_array()) throw config_error("'models' must be a list");
    for (std::size_t i = 0; i < models.size(); ++i) entries.push_back(entry_from_json(models[i], i));
  }
  return ModelRegistry(std::move(entries));
}

ModelRegistry ModelRegistry::from_toml(std::string_view text) {
  try {
    return from_json(toml_to_json(toml::parse(text)));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
    throw config_error(msg.str());
  }
}

ModelRegistry ModelRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, "cannot open model registry " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".json") {
    try {
      return from_json(json::parse(buf.str()));
    } catch (const json::parse_error& e) {
      throw config_error(std::string("JSON parse error: ") + e.what());
    }
  }
  return from_toml(buf.str());
}

const ModelRegistryEntry* ModelRegistry::find(std::string_view id) const noexcept {
  for (const auto& e : entries_) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------

ServiceResponse error_response(int status, std::string_view code, std::string_view message) {
  return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

double round4(double x) noexcept { return std::round(x * 10000.0) / 10000.0; }

Service::Service(ModelRegistry registry, ServiceOptions options)
    : registry_(std::move(registry)), options_(std::move(options)) {
  for (const auto& e : registry_.entries()) {
    auto make = [&](const std::string& endpoint, BackendRole role) {
      if (endpoint == kStub) return stub_backend(role, e.language);
      auto opts = options_.backend;
      opts.language = e.language;
      return http_backend(endpoint, opts);
    };
    Model m{e, make(e.ae_endpoint, BackendRole::ae), make(e.qg_endpoint, BackendRole::qg), nullptr};
    if (e.perplexity_endpoint) {
      m.perplexity = std::make_shared<HttpPerplexityScorer>(*e.perplexity_endpoint,
                                                            options_.backend.timeout);
    }
    models_.emplace(e.id, std::move(m));
  }
}

const Service::Model& Service::model_for(const json& request) const {
  const auto id = string_field(request, "model_id");
  const auto it = models_.find(id);
  if (it == models_.end()) {
    throw Error(Errc::InvalidArgument, "unknown model_id '" + id + "'").with_http_status(404);
  }
  return it->second;
}

ServiceResponse Service::generate_qa(const json& request) const {
  const auto& model = model_for(request);
  const auto params = decoding_for(request, model.entry.decoding);
  const Paragraph p(string_field(request, "paragraph"), model.entry.language,
                    options_.max_paragraph_chars);
  auto opts = options_.pipeline;
  opts.perplexity = model.perplexity;
  const auto result = qagkit::generate_qa(p, *model.ae, *model.qg, params, opts);

  ojson pairs = ojson::array();
  for (std::size_t i = 0; i < result.pairs.pairs.size(); ++i) {
    const auto& pair = result.pairs.pairs[i];
    const auto& diag = result.pair_diagnostics[i];
    pairs.push_back({{"question", pair.question()},
                     {"answer", pair.answer()},
                     {"overlap", round4(diag.overlap_score)},
                     {"perplexity", diag.perplexity ? ojson(*diag.perplexity) : ojson(nullptr)}});
  }
  const auto& d = result.diagnostics;
  ojson diagnostics = {{"sentences", d.sentences},
                       {"answers_extracted", d.answers_extracted},
                       {"dropped_answers", d.dropped_answers},
                       {"failed_ae_calls", d.failed_ae_calls},
                       {"failed_questions", d.failed_questions},
                       {"messages", d.messages}};
  return {200, {{"pairs", pairs}, {"diagnostics", diagnostics}}};
}

ServiceResponse Service::generate_question(const json& request) const {
  const auto& model = model_for(request);
  const auto params = decoding_for(request, model.entry.decoding);
  const Paragraph p(string_field(request, "paragraph"), model.entry.language,
                    options_.max_paragraph_chars);
  const auto answer = string_field(request, "answer");
  const auto question =
      qagkit::generate_question(p, answer, *model.qg, params, options_.pipeline);
  const double overlap = lexical_overlap_score(question, p.text(), options_.pipeline.overlap);
  return {200, {{"question", question}, {"overlap", round4(overlap)}}};
}

ServiceResponse Service::evaluate(const json& request) const {
  const auto metric_name_in = string_field(request, "metric");
  Language lang = Language::en;
  if (request.contains("language")) lang = parse_language(string_field(request, "language"));
  const auto metric = make_metric(metric_name_in, lang, options_.embedding_provider);
  const auto gold = pair_sets(request, "gold");
  const auto pred = pair_sets(request, "pred");
  const auto score = corpus_qaaligned(gold, pred, metric);
  ojson per_context = ojson::array();
  for (const auto& ps : score.per_paragraph) {
    per_context.push_back({{"context", std::stoul(ps.context_id)},
                           {"f1", round4(ps.f1)},
                           {"precision", round4(ps.precision)},
                           {"recall", round4(ps.recall)}});
  }
  return {200,
          {{"f1", round4(score.f1)},
           {"precision", round4(score.precision)},
           {"recall", round4(score.recall)},
           {"metric", score.base_metric},
           {"per_context", per_context}}};
}

ServiceResponse Service::models() const {
  ojson list = ojson::array();
  for (const auto& e : registry_.entries()) {
    list.push_back({{"id", e.id},
                    {"language", language_code(e.language)},
                    {"decoding", decoding_json(e.decoding)},
                    {"perplexity", e.perplexity_endpoint.has_value()}});
  }
  return {200, list};
}

ServiceResponse Service::healthz() { return {200, {{"status", "ok"}}}; }

ServiceResponse Service::handle(std::string_view method, std::string_view path,
                                std::string_view body) const {
  struct Admission {
    std::atomic<std::size_t>& counter;
    bool admitted;
    Admission(std::atomic<std::size_t>& c, std::size_t limit)
        : counter(c), admitted(c.fetch_add(1) < limit) {}
    ~Admission() { counter.fetch_sub(1); }
  } admission(in_flight_, options_.max_concurrent_requests);
  if (!admission.admitted) {
    return error_response(429, "Overloaded", "too many concurrent requests");
  }

  using Handler = ServiceResponse (Service::*)(const json&) const;
  struct Route {
    std::string_view path;
    std::string_view method;
    Handler post;
  };
  static constexpr Route kRoutes[] = {
      {"/v1/generate_qa", "POST", &Service::generate_qa},
      {"/v1/generate_question", "POST", &Service::generate_question},
      {"/v1/evaluate", "POST", &Service::evaluate},
      {"/v1/models", "GET", nullptr},
      {"/healthz", "GET", nullptr},
  };

  const Route* route = nullptr;
  for (const auto& r : kRoutes) {
    if (r.path == path) route = &r;
  }
  if (!route) return error_response(404, "NotFound", "no route for " + std::string(path));
  if (route->method != method) {
    return error_response(405, "MethodNotAllowed",
                          std::string(path) + " expects " + std::string(route->method));
  }
  if (!route->post) return path == "/healthz" ? healthz() : models();

  json request;
  try {
    request = json::parse(body);
  } catch (const json::parse_error& e) {
    return error_response(422, "MalformedBody", std::string("invalid JSON: ") + e.what());
  }
  if (!request.is_object()) return error_response(422, "MalformedBody", "body must be a JSON object");

  try {
    return (this->*(route->post))(request);
  } catch (const Error& e) {
    if (e.http_status() == 404) return error_response(404, "UnknownModel", e.what());
    return from_error(e);
  } catch (const std::exception& e) {
    return error_response(500, "Internal", e.what());
  }
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  std::shared_ptr<const Service> service;
  httplib::Server server;
};

HttpServer::HttpServer(std::shared_ptr<const Service> service)
    : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  const std::size_t threads = impl_->service->options().max_concurrent_requests + 8;
  impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  auto handler = [svc = impl_->service](const httplib::Request& req, httplib::Response& res) {
    const auto out = svc->handle(req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body.dump(-1, ' ', false, ojson::error_handler_t::replace),
                    "application/json");
  };
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
  impl_->server.Put(".*", handler);
  impl_->server.Delete(".*", handler);
  impl_->server.Patch(".*", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(Errc::ConfigError, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(Errc::ConfigError, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace qagkit
