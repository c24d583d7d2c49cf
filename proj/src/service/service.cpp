#include "pgr2m/service/service.hpp"

#include <httplib.h>

#include <sstream>

#include "pgr2m/error.hpp"
#include "pgr2m/io/checkpoint.hpp"
#include "pgr2m/motion/io.hpp"
#include "pgr2m/predictors/text.hpp"
#include "pgr2m/tokenizer/features.hpp"

namespace pgr2m::service {

namespace {

Response error(int status, const std::string& message, nlohmann::json extra = nlohmann::json::object()) {
  extra["error"] = message;
  return {status, std::move(extra)};
}

// Distinguishes malformed requests (400) from well-formed but unusable ones.
struct BadRequest : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const nlohmann::json& field(const nlohmann::json& req, const char* name) {
  if (!req.is_object() || !req.contains(name)) throw BadRequest(std::string("missing field '") + name + "'");
  return req.at(name);
}

motion::Motion motion_field(const nlohmann::json& req) {
  try {
    return motion::motion_from_json(field(req, "motion"), "motion");
  } catch (const ValidationError& e) {
    throw BadRequest(e.what());
  }
}

pred::ResidualCodes residual_field(const nlohmann::json& j, const Config& cfg, std::size_t steps) {
  pred::ResidualCodes r;
  try {
    r = j.get<pred::ResidualCodes>();
  } catch (const nlohmann::json::exception& e) {
    throw BadRequest(std::string("residual_indices: ") + e.what());
  }
  if (!r.empty() && r.size() != cfg.stages) {
    throw BadRequest("residual_indices has " + std::to_string(r.size()) + " stages, expected " + std::to_string(cfg.stages));
  }
  for (std::size_t s = 0; s < r.size(); ++s) {
    if (r[s].size() != steps) throw BadRequest("residual_indices[" + std::to_string(s) + "] length differs from pose_codes");
    for (auto k : r[s]) {
      if (k >= cfg.residual_codes) throw BadRequest("residual_indices[" + std::to_string(s) + "] holds code " + std::to_string(k));
    }
  }
  return r;
}

nlohmann::json motion_payload(const motion::Motion& m) {
  nlohmann::json j = motion::to_json(m);
  return j;
}

}  // namespace

Service::Service(std::shared_ptr<const Bundle> bundle, std::chrono::seconds session_ttl)
    : bundle_(std::move(bundle)), ttl_(session_ttl) {}

Service::~Service() { stop(); }

Response Service::info() const {
  const Bundle& b = *bundle_;
  const auto& cat = b.catalog();
  nlohmann::json entries = nlohmann::json::array(), families = nlohmann::json::array();
  for (std::size_t n = 0; n < cat.size(); ++n) {
    entries.push_back({{"index", n},
                       {"name", cat[n].name},
                       {"family", cat[n].family},
                       {"attribute", cat[n].attribute},
                       {"body_part", cat[n].body_part}});
  }
  for (std::size_t f = 0; f < cat.families().size(); ++f) {
    nlohmann::json members = nlohmann::json::array();
    for (auto n : cat.members(f)) members.push_back(cat[n].name);
    families.push_back({{"name", cat.families()[f]}, {"exclusive", cat.exclusive(f)}, {"members", members}});
  }
  const Config& c = b.config();
  return {200,
          {{"bundle", b.id},
           {"format", io::kCheckpointFormat},
           {"version", io::kCheckpointVersion},
           {"catalog_version", cat.version()},
           {"N", cat.size()},
           {"S", c.stages},
           {"N_r", c.residual_codes},
           {"D_c", c.latent_dim},
           {"stride", c.stride},
           {"max_steps", c.max_steps},
           {"fps", motion::kFps},
           {"catalog", entries},
           {"families", families},
           {"config", c.to_json()}}};
}

Response Service::tokenize(const nlohmann::json& req) const {
  const motion::Motion m = motion_field(req);
  tok::Tokens t;
  try {
    motion::validate(m);
    t = tok::tokenize(bundle_->tokenizer, m);
  } catch (const ValidationError& e) {
    throw BadRequest(e.what());
  }
  return {200,
          {{"pose_codes", t.pose.to_json()},
           {"residual_indices", t.residual},
           {"steps", t.pose.steps},
           {"origin", {t.origin_x, t.origin_z}}}};
}

Response Service::decode(const nlohmann::json& req) const {
  const Bundle& b = *bundle_;
  pose::PoseCodeSequence z;
  try {
    z = pose::PoseCodeSequence::from_json(field(req, "pose_codes"), b.catalog().size());
  } catch (const ValidationError& e) {
    throw BadRequest(std::string("pose_codes: ") + e.what());
  }
  if (z.steps == 0) throw BadRequest("pose_codes is empty");
  const auto r = req.contains("residual_indices") ? residual_field(req.at("residual_indices"), b.config(), z.steps)
                                                  : pred::ResidualCodes{};
  double ox = 0.0, oz = 0.0;
  if (req.contains("origin")) {
    try {
      const auto o = req.at("origin").get<std::vector<double>>();
      if (o.size() != 2) throw BadRequest("origin must be [x, z]");
      ox = o[0];
      oz = o[1];
    } catch (const nlohmann::json::exception& e) {
      throw BadRequest(std::string("origin: ") + e.what());
    }
  }
  motion::Motion m = decode_motion(b.tokenizer, z, r, ox, oz);
  if (req.contains("caption") && req.at("caption").is_string()) m.caption = req.at("caption").get<std::string>();
  return {200, {{"motion", motion_payload(m)}, {"frames", motion_payload(m).at("frames")}}};
}

Response Service::generate(const nlohmann::json& req) const {
  std::string caption;
  std::vector<std::string> keywords;
  std::uint64_t seed = 0;
  pred::SampleOptions opt;
  try {
    caption = field(req, "caption").get<std::string>();
    if (req.contains("keywords")) keywords = req.at("keywords").get<std::vector<std::string>>();
    if (req.contains("seed")) seed = req.at("seed").get<std::uint64_t>();
    if (req.contains("mode")) opt.mode = pred::parse_sample_mode(req.at("mode").get<std::string>());
    opt.temperature = req.value("temperature", bundle_->config().temperature);
  } catch (const nlohmann::json::exception& e) {
    throw BadRequest(e.what());
  } catch (const ValidationError& e) {
    throw BadRequest(e.what());
  }
  try {
    const Generation g = pgr2m::generate(*bundle_, caption, keywords, opt, seed);
    return {200,
            {{"motion", motion_payload(g.motion)},
             {"frames", motion_payload(g.motion).at("frames")},
             {"pose_codes", g.pose.to_json()},
             {"residual_indices", g.residual}}};
  } catch (const EmptyGenerationError& e) {
    return error(422, e.what());
  }
}

std::shared_ptr<Service::Session> Service::find_session(const nlohmann::json& req) {
  std::string id;
  try {
    id = field(req, "session").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw BadRequest("session must be a string");
  }
  std::lock_guard<std::mutex> g(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return nullptr;
  it->second->touched = Clock::now();
  return it->second;
}

void Service::evict_expired() {
  std::lock_guard<std::mutex> g(sessions_mutex_);
  const auto now = Clock::now();
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now - it->second->touched > ttl_) {
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

std::size_t Service::session_count() {
  evict_expired();
  std::lock_guard<std::mutex> g(sessions_mutex_);
  return sessions_.size();
}

Response Service::open_session(const nlohmann::json& req) {
  auto s = std::make_shared<Session>();
  s->motion = motion_field(req);
  if (req.contains("caption") && req.at("caption").is_string()) s->motion.caption = req.at("caption").get<std::string>();
  edit::EditReport r;
  try {
    motion::validate(s->motion);
    s->pose = pose::parse_motion(bundle_->catalog(), s->motion, bundle_->config().stride);
    r = edit::edit_motion(*bundle_, s->motion, {});
  } catch (const ValidationError& e) {
    throw BadRequest(e.what());
  }
  s->touched = Clock::now();
  std::string id;
  {
    std::lock_guard<std::mutex> g(sessions_mutex_);
    id = "s" + std::to_string(next_session_++);
    sessions_[id] = s;
  }
  return {200,
          {{"session", id},
           {"steps", s->pose.steps},
           {"pose_codes", s->pose.to_json()},
           {"residual_indices", r.residual},
           {"motion", motion_payload(r.original)},
           {"frames", motion_payload(r.original).at("frames")}}};
}

Response Service::edit(const nlohmann::json& req) {
  auto s = find_session(req);
  if (!s) return error(404, "unknown or expired session");
  edit::EditScript script;
  try {
    script = edit::EditScript::from_json(field(req, "script"));
  } catch (const edit::EditError& e) {
    return error(422, e.what(), {{"op", e.op}});
  } catch (const ValidationError& e) {
    throw BadRequest(e.what());
  }
  std::lock_guard<std::mutex> g(s->lock);
  try {
    (void)edit::apply_edit(bundle_->catalog(), s->pose, script);
  } catch (const edit::EditError& e) {
    return error(422, e.what(), {{"op", e.op}});
  }
  // The report compares against the unedited original, so replay the whole history.
  edit::EditScript combined;
  for (const auto& h : s->history) combined.ops.insert(combined.ops.end(), h.ops.begin(), h.ops.end());
  combined.ops.insert(combined.ops.end(), script.ops.begin(), script.ops.end());
  const edit::EditReport r = edit::edit_motion(*bundle_, s->motion, combined);
  s->history.push_back(std::move(script));
  s->pose = r.pose;
  return {200,
          {{"motion", motion_payload(r.edited)},
           {"frames", motion_payload(r.edited).at("frames")},
           {"edit_report", r.to_json()},
           {"history", s->history.size()}}};
}

Response Service::undo(const nlohmann::json& req) {
  auto s = find_session(req);
  if (!s) return error(404, "unknown or expired session");
  std::lock_guard<std::mutex> g(s->lock);
  if (s->history.empty()) return error(409, "nothing to undo");
  s->history.pop_back();
  edit::EditScript combined;
  for (const auto& h : s->history) combined.ops.insert(combined.ops.end(), h.ops.begin(), h.ops.end());
  const edit::EditReport r = edit::edit_motion(*bundle_, s->motion, combined);
  s->pose = r.pose;
  return {200,
          {{"pose_codes", s->pose.to_json()},
           {"motion", motion_payload(r.edited)},
           {"frames", motion_payload(r.edited).at("frames")},
           {"edit_report", r.to_json()},
           {"history", s->history.size()}}};
}

Response Service::handle(const std::string& method, const std::string& path, const std::string& body) {
  if (!bundle_) return error(503, "no model bundle loaded");
  evict_expired();
  try {
    if (method == "GET" && path == "/api/info") return info();
    if (method != "POST") return error(405, "method not allowed");
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      return error(400, std::string("request body is not JSON: ") + e.what());
    }
    if (path == "/api/tokenize") return tokenize(req);
    if (path == "/api/decode") return decode(req);
    if (path == "/api/generate") return generate(req);
    if (path == "/api/session") return open_session(req);
    if (path == "/api/edit") return edit(req);
    if (path == "/api/undo") return undo(req);
    return error(404, "no such endpoint " + path);
  } catch (const BadRequest& e) {
    return error(400, e.what());
  } catch (const Error& e) {
    return error(e.kind() == ErrorKind::validation ? 422 : 500, e.what());
  }
}

int Service::bind(const std::string& host, int port) {
  server_ = std::make_unique<httplib::Server>();
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const Response r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server_->set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
  server_->Get(R"(/api/.*)", route);
  server_->Post(R"(/api/.*)", route);
  server_->Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  return port_;
}

void Service::listen_after_bind() {
  if (!server_) throw IoError("service is not bound");
  server_->listen_after_bind();
}

void Service::serve(const std::string& host, int port) {
  bind(host, port);
  listen_after_bind();
}

void Service::wait_until_ready() const {
  if (server_) server_->wait_until_ready();
}

void Service::stop() {
  if (server_) server_->stop();
}

}  // namespace pgr2m::service
