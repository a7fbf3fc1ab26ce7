#include <cmath>

#include <fmt/format.h>
#include <httplib.h>

#include "vqasynth/synthgen.hpp"

namespace vqasynth::synth {

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    const auto& url = config_.endpoint;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw Error(ErrorKind::Validation, "backend endpoint must be an absolute http(s) URL: " + url);
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw Error(ErrorKind::Validation, "unsupported endpoint scheme " + scheme);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (scheme == "https") throw Error(ErrorKind::Validation, "built without TLS support");
#endif
    const auto path_start = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/v1/chat/completions" : url.substr(path_start);
}

nlohmann::json HttpBackend::request_body(const GenerationRequest& request, double tokens_per_word) {
    nlohmann::json content;
    if (request.frame_plan) {
        content = nlohmann::json::array();
        content.push_back({{"type", "text"}, {"text", request.prompt.user_text}});
        content.push_back({{"type", "frame_reference"},
                           {"video_uri", request.video_uri},
                           {"frame_indices", request.frame_plan->indices}});
    } else {
        content = request.prompt.user_text;
    }
    nlohmann::json body;
    body["model"] = request.model_id;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", content}}});
    body["temperature"] = request.temperature;
    body["max_tokens"] = static_cast<int>(std::ceil(request.max_output_words * tokens_per_word));
    return body;
}

std::string HttpBackend::parse_response(const std::string& body) {
    try {
        const auto j = nlohmann::json::parse(body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        // A 200 with an unusable body is not going to improve on retry.
        throw BackendError(std::string("malformed completion response: ") + e.what(), false, 200);
    }
}

namespace {
std::optional<std::chrono::milliseconds> parse_retry_after(const httplib::Response& res) {
    if (!res.has_header("Retry-After")) return std::nullopt;
    const auto v = res.get_header_value("Retry-After");
    try {
        std::size_t pos = 0;
        const double seconds = std::stod(v, &pos);
        if (pos != v.size() || seconds < 0) return std::nullopt;
        return std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
    } catch (const std::exception&) {
        return std::nullopt;  // HTTP-date form falls back to backoff
    }
}
}  // namespace

std::string HttpBackend::generate(const GenerationRequest& request) {
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
    const auto body = request_body(request, config_.tokens_per_word).dump();
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) throw BackendError("transport error: " + httplib::to_string(res.error()), true);
    const int status = res->status;
    if (status == 429) throw BackendError("rate limited (429)", true, status, parse_retry_after(*res));
    if (status >= 500) throw BackendError(fmt::format("server error {}", status), true, status);
    if (status >= 400)
        throw BackendError(fmt::format("request rejected with {}: {}", status, res->body.substr(0, 200)), false, status);
    return parse_response(res->body);
}

}  // namespace vqasynth::synth
