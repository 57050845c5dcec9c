#include "cairdd/llm_client.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "text_util.hpp"

namespace cairdd {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_byte(std::uint64_t& h, unsigned char b) { h = (h ^ b) * kFnvPrime; }

void fnv_text(std::uint64_t& h, const std::string& s) {
    for (unsigned char c : s) fnv_byte(h, c);
}

int hex_val(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

// ---- deterministic synthesizer -------------------------------------------

std::string synth_idea(std::uint64_t d) {
    std::string tag = digest_hex(d).substr(0, 4);
    return "In the archive town of Veldt-" + tag +
           ", a keeper of unsent letters discovers that every envelope opened rewrites one "
           "shared memory, and must decide which version of the past deserves to survive.";
}

std::string synth_concept(std::uint64_t d, bool expanded) {
    int n = 3 + static_cast<int>(d % 3);
    std::string hex = digest_hex(d);
    std::string out = "Title: The ";
    out += expanded ? "Expanded" : "Quiet";
    out += " Ledger ";
    out += hex.substr(0, 4);
    out += '\n';
    for (int i = 1; i <= n; ++i) {
        std::string tag = hex.substr(static_cast<std::size_t>((i * 2) % 14), 2);
        out += "\nChapter " + std::to_string(i) + ": \"Passage " + std::to_string(i) + "-" +
               tag + "\"\nSummary: A deterministic summary for chapter " + std::to_string(i) +
               " of variant " + tag + ".\n";
    }
    return out;
}

struct SynthCat {
    std::string name;
    int min = 0;
    int max = 4;
};

// pulls "N. Name (min-max)..." lines back out of a scoring prompt
std::vector<SynthCat> prompt_categories(const std::string& user) {
    std::vector<SynthCat> cats;
    for (const std::string& line : text::split_lines(user)) {
        std::size_t i = 0, n = line.size();
        std::size_t digits = i;
        while (i < n && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
        if (i == digits || i >= n || line[i] != '.') continue;
        ++i;
        while (i < n && line[i] == ' ') ++i;
        std::size_t open = line.find(" (", i);
        if (open == std::string::npos || open <= i) continue;
        std::size_t p = open + 2;
        int lo = 0, hi = 0;
        std::size_t start = p;
        while (p < n && std::isdigit(static_cast<unsigned char>(line[p]))) lo = lo * 10 + (line[p++] - '0');
        if (p == start || p >= n || line[p] != '-') continue;
        ++p;
        start = p;
        while (p < n && std::isdigit(static_cast<unsigned char>(line[p]))) hi = hi * 10 + (line[p++] - '0');
        if (p == start || p >= n || line[p] != ')') continue;
        cats.push_back({line.substr(i, open - i), lo, hi});
    }
    return cats;
}

std::string synth_scores(std::uint64_t d, const std::vector<SynthCat>& cats) {
    std::vector<int> scores;
    double sum = 0.0;
    for (std::size_t i = 0; i < cats.size(); ++i) {
        int s = cats[i].max - static_cast<int>((d >> (i % 32)) & 1);
        s = std::max(s, cats[i].min);
        scores.push_back(s);
        sum += s;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", sum / static_cast<double>(cats.size()));
    std::string out = "Score: ";
    out += buf;
    out += '\n';
    for (std::size_t i = 0; i < cats.size(); ++i) {
        if (i > 0) out += ", ";
        out += cats[i].name;
        out += ' ';
        out += std::to_string(scores[i]);
    }
    return out;
}

std::string synth_rubric() {
    return "1. World-Building & Relevance \xE2\x80\x94 depth and coherence of the setting and "
           "its relevance to the prompt.\n"
           "2. Originality & Novelty \xE2\x80\x94 freshness of the premise and avoidance of "
           "cliche.\n"
           "3. Literary Craftsmanship \xE2\x80\x94 quality of structure, pacing and prose "
           "implied by the outline.\n"
           "4. Thematic Resonance \xE2\x80\x94 strength and coherence of the underlying "
           "themes.";
}

std::string synthesize_response(const ChatRequest& req) {
    const std::string& user = req.user_turns.back();
    std::uint64_t d = request_digest(req);
    if (user.rfind("Evaluate the creativity", 0) == 0) {
        std::vector<SynthCat> cats = prompt_categories(user);
        if (!cats.empty()) return synth_scores(d, cats);
    }
    if (user.rfind("Create a rubric", 0) == 0) return synth_rubric();
    if (user.rfind("Here is the current concept", 0) == 0) return synth_concept(d, true);
    if (req.system.find("list of chapters") != std::string::npos) return synth_concept(d, false);
    if (user.rfind("Develop ", 0) == 0) return synth_idea(d);
    return "Response " + digest_hex(d) + ".";
}

// ---- stub backend ---------------------------------------------------------

ChatResponse stub_once(const BackendConfig& cfg, const ChatRequest& req) {
    std::uint64_t d = request_digest(req);
    StubTable* table = cfg.stub.get();
    if (table) {
        std::uint64_t ordinal = table->calls.fetch_add(1) + 1;
        if (table->fail_calls.count(ordinal))
            throw BackendUnavailable("scripted transient failure at call " +
                                     std::to_string(ordinal));
        if (table->fail_digests.count(d))
            throw BackendUnavailable("scripted failure for request " + digest_hex(d));
        auto it = table->responses.find(d);
        if (it != table->responses.end()) {
            std::lock_guard<std::mutex> lock(table->mu);
            std::size_t& next = table->next_response[d];
            const std::vector<std::string>& list = it->second;
            const std::string& body = list[std::min(next, list.size() - 1)];
            ++next;
            return {body, {{"backend", "stub"}, {"digest", digest_hex(d)}}};
        }
        if (!table->synthesize)
            throw ProtocolError("no stub response for request " + digest_hex(d));
    }
    return {synthesize_response(req), {{"backend", "stub"}, {"digest", digest_hex(d)}}};
}

// ---- http backend ---------------------------------------------------------

ChatResponse http_once(const BackendConfig& cfg, const ChatRequest& req) {
    std::string base = cfg.endpoint;
    std::string prefix;
    std::size_t scheme = base.find("://");
    std::size_t slash = base.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (slash != std::string::npos) {
        prefix = base.substr(slash);
        base = base.substr(0, slash);
    }
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    nlohmann::json body;
    body["model"] = cfg.model;
    nlohmann::json messages = nlohmann::json::array();
    if (!req.system.empty())
        messages.push_back({{"role", "system"}, {"content", req.system}});
    for (const std::string& turn : req.user_turns)
        messages.push_back({{"role", "user"}, {"content", turn}});
    body["messages"] = std::move(messages);
    body["temperature"] = cfg.temperature;
    body["max_tokens"] = cfg.max_tokens;
    body["top_p"] = cfg.top_p;

    httplib::Client cli(base);
    cli.set_connection_timeout(10, 0);
    cli.set_read_timeout(120, 0);
    cli.set_write_timeout(30, 0);

    httplib::Headers headers;
    if (const char* key = std::getenv("CAIRDD_API_KEY"))
        headers.emplace("Authorization", std::string("Bearer ") + key);

    auto res = cli.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
    if (!res)
        throw BackendUnavailable("connection to " + base +
                                 " failed: " + httplib::to_string(res.error()));
    int code = res->status;
    if (code == 401 || code == 403)
        throw AuthError("backend rejected credentials (status " + std::to_string(code) + ")");
    if (code == 408 || code == 429 || code >= 500)
        throw BackendUnavailable("backend returned status " + std::to_string(code));
    if (code != 200)
        throw ProtocolError("unexpected status " + std::to_string(code) + ": " +
                            res->body.substr(0, 200));

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("unparseable response body: ") + e.what());
    }
    try {
        ChatResponse out;
        out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        out.backend_meta["status"] = std::to_string(code);
        if (j.contains("model") && j["model"].is_string())
            out.backend_meta["model"] = j["model"].get<std::string>();
        if (j.contains("usage") && j["usage"].is_object()) {
            for (const auto& [k, v] : j["usage"].items())
                if (v.is_number())
                    out.backend_meta["usage." + k] = std::to_string(v.get<long long>());
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("response missing completion content: ") + e.what());
    }
}

}  // namespace

std::uint64_t request_digest(const ChatRequest& req) {
    std::uint64_t h = kFnvOffset;
    fnv_text(h, req.system);
    fnv_byte(h, 0x1F);
    for (const std::string& turn : req.user_turns) {
        fnv_text(h, turn);
        fnv_byte(h, 0x1E);
    }
    return h;
}

std::string digest_hex(std::uint64_t digest) {
    static const char* kHex = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = kHex[digest & 0xF];
        digest >>= 4;
    }
    return s;
}

std::uint64_t parse_digest_hex(const std::string& hex) {
    if (hex.empty() || hex.size() > 16)
        throw SchemaError("bad request digest \"" + hex + "\": expected up to 16 hex chars");
    std::uint64_t v = 0;
    for (char c : hex) {
        int d = hex_val(c);
        if (d < 0)
            throw SchemaError("bad request digest \"" + hex + "\": expected hex chars");
        v = (v << 4) | static_cast<std::uint64_t>(d);
    }
    return v;
}

std::shared_ptr<StubTable> load_stub_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open stub table: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("stub table " + path + ": " + e.what());
    }
    if (!j.is_object()) throw SchemaError("stub table " + path + ": top level must be an object");

    auto table = std::make_shared<StubTable>();
    try {
        if (j.contains("responses")) {
            for (const auto& [key, value] : j["responses"].items()) {
                std::vector<std::string>& list = table->responses[parse_digest_hex(key)];
                if (value.is_string()) {
                    list.push_back(value.get<std::string>());
                } else if (value.is_array() && !value.empty()) {
                    for (const auto& e : value) list.push_back(e.get<std::string>());
                } else {
                    throw SchemaError("stub table " + path + ": response for " + key +
                                      " must be a string or non-empty array of strings");
                }
            }
        }
        if (j.contains("fail_digests"))
            for (const auto& e : j["fail_digests"])
                table->fail_digests.insert(parse_digest_hex(e.get<std::string>()));
        if (j.contains("fail_calls"))
            for (const auto& e : j["fail_calls"])
                table->fail_calls.insert(e.get<std::uint64_t>());
        if (j.contains("synthesize")) table->synthesize = j["synthesize"].get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("stub table " + path + ": " + e.what());
    }
    return table;
}

bool operator==(const BackendConfig& a, const BackendConfig& b) {
    return a.kind == b.kind && a.endpoint == b.endpoint && a.model == b.model &&
           a.temperature == b.temperature && a.max_tokens == b.max_tokens &&
           a.top_p == b.top_p && a.retry_max == b.retry_max &&
           a.retry_base_delay == b.retry_base_delay;
}

ChatResponse complete(const BackendConfig& cfg, const ChatRequest& req) {
    if (req.user_turns.empty()) throw UsageError("complete: request has no user turns");
    if (cfg.temperature < 0.0) throw UsageError("complete: temperature must be >= 0");
    if (cfg.max_tokens <= 0) throw UsageError("complete: max_tokens must be positive");
    if (cfg.top_p <= 0.0 || cfg.top_p > 1.0) throw UsageError("complete: top_p must be in (0,1]");
    if (cfg.retry_max < 0) throw UsageError("complete: retry_max must be >= 0");
    if (cfg.kind == BackendKind::http_openai_compatible &&
        (cfg.endpoint.empty() || cfg.model.empty()))
        throw UsageError("complete: http backend requires endpoint and model");

    for (int attempt = 0;; ++attempt) {
        try {
            return cfg.kind == BackendKind::stub ? stub_once(cfg, req) : http_once(cfg, req);
        } catch (const BackendUnavailable&) {
            if (attempt >= cfg.retry_max) throw;
            auto delay = cfg.retry_base_delay * (1LL << std::min(attempt, 16));
            if (delay.count() > 0) std::this_thread::sleep_for(delay);
        }
    }
}

}  // namespace cairdd
