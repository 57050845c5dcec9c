#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "cairdd/errors.hpp"

namespace cairdd {

enum class BackendKind { http_openai_compatible, stub };

struct ChatRequest {
    std::string system;                   // may be empty
    std::vector<std::string> user_turns;  // must be non-empty
};

struct ChatResponse {
    std::string text;  // assistant content, untrimmed
    std::map<std::string, std::string> backend_meta;
};

// Offline backend fixture. Scripted responses are keyed by request digest; a
// digest mapped to several responses hands them out in call order (the last
// repeats once exhausted). fail_digests fail every time they are requested,
// fail_calls fail single calls by 1-based ordinal across the table. Unknown
// digests fall through to a deterministic synthesizer unless synthesize is
// turned off, in which case they are a protocol error.
struct StubTable {
    std::map<std::uint64_t, std::vector<std::string>> responses;
    std::set<std::uint64_t> fail_digests;
    std::set<std::uint64_t> fail_calls;
    bool synthesize = true;

    // consumption state, not part of the fixture definition
    std::atomic<std::uint64_t> calls{0};
    std::mutex mu;  // guards next_response
    std::map<std::uint64_t, std::size_t> next_response;
};

struct BackendConfig {
    BackendKind kind = BackendKind::stub;
    std::string endpoint;  // http kind only, e.g. http://localhost:1234/v1
    std::string model;
    double temperature = 0.7;
    int max_tokens = 2048;
    double top_p = 1.0;
    int retry_max = 3;
    std::chrono::milliseconds retry_base_delay{500};
    std::shared_ptr<StubTable> stub;  // stub kind; null means synthesizer only
};

// Field-wise comparison of the settings; the stub table is runtime state,
// not configuration, and is ignored.
bool operator==(const BackendConfig& a, const BackendConfig& b);

// FNV-1a 64 over the system text and each user turn with separator bytes
// between fields; stable across processes and platforms.
std::uint64_t request_digest(const ChatRequest& req);
std::string digest_hex(std::uint64_t digest);
std::uint64_t parse_digest_hex(const std::string& hex);

// JSON file: {"responses": {hex: text | [text, ...]}, "fail_digests": [hex],
// "fail_calls": [int], "synthesize": bool}; every field optional.
std::shared_ptr<StubTable> load_stub_table(const std::string& path);

// One assistant completion. Transient failures (connection errors, status
// 408/429/5xx, scripted stub failures) retry up to retry_max times with
// doubling backoff starting at retry_base_delay; auth and protocol errors
// never retry. Credentials come from the CAIRDD_API_KEY environment
// variable; the config and request are never modified.
ChatResponse complete(const BackendConfig& cfg, const ChatRequest& req);

}  // namespace cairdd
