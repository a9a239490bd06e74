#pragma once

// Client side of the backend wire protocol: JSON over HTTP/1.1.
//
//   POST /v1/edit     {"image": b64png, "prompt": str, "seed": int} -> {"image": b64png}
//   POST /v1/caption  {"image": b64png}                             -> {"caption": str}
//   POST /v1/embed    {"image": b64png, "space": "semantic"|"perceptual"} -> {"vector": [num]}
//   GET  /v1/info                                                   -> {"name","kind","version"}
//
// Errors come back as 4xx/5xx with {"error": str}.

#include <atomic>
#include <chrono>
#include <memory>
#include <semaphore>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "edittrack/backends/backend.hpp"
#include "edittrack/image_io.hpp"
#include "edittrack/util.hpp"

namespace edittrack {

struct RemoteConfig {
    std::string endpoint;  // e.g. http://127.0.0.1:8080
    int retries = 2;       // extra attempts after the first failure
    int timeout_ms = 60000;
    int max_in_flight = 4;
};

inline std::string encode_image_b64(const ImageBuffer& img) { return base64_encode(encode_png(img)); }

inline ImageBuffer decode_image_b64(const std::string& b64) {
    const auto bytes = base64_decode(b64);
    if (!bytes) throw DecodeError("invalid base64 image payload");
    return decode_image(*bytes);
}

class RemoteClient {
public:
    explicit RemoteClient(RemoteConfig cfg)
        : cfg_(std::move(cfg)), slots_(std::make_shared<std::counting_semaphore<1024>>(std::clamp(cfg_.max_in_flight, 1, 1024))) {
        if (cfg_.endpoint.empty()) throw ConfigError("remote backend needs an endpoint");
        if (cfg_.retries < 0) throw ConfigError("retries must be >= 0");
    }

    const RemoteConfig& config() const { return cfg_; }

    // Number of HTTP attempts issued so far (all routes).
    std::uint64_t attempts() const { return attempts_->load(); }

    nlohmann::json post(const std::string& path, const nlohmann::json& body) const {
        return request(path, &body);
    }

    nlohmann::json get(const std::string& path) const { return request(path, nullptr); }

private:
    nlohmann::json request(const std::string& path, const nlohmann::json* body) const {
        std::string last_error;
        const std::string payload = body ? body->dump() : std::string();
        for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
            slots_->acquire();
            httplib::Result res;
            {
                httplib::Client cli(cfg_.endpoint);
                const auto t = std::chrono::milliseconds(cfg_.timeout_ms);
                cli.set_connection_timeout(t);
                cli.set_read_timeout(t);
                cli.set_write_timeout(t);
                attempts_->fetch_add(1);
                res = body ? cli.Post(path, payload, "application/json") : cli.Get(path);
            }
            slots_->release();
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            nlohmann::json reply;
            try {
                reply = nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception&) {
                last_error = "malformed JSON reply (status " + std::to_string(res->status) + ")";
                if (res->status >= 500) continue;
                throw BackendError(cfg_.endpoint + path + ": " + last_error);
            }
            if (res->status >= 200 && res->status < 300) return reply;
            const std::string msg = reply.is_object() && reply.contains("error") && reply["error"].is_string()
                                        ? reply["error"].get<std::string>()
                                        : res->body;
            last_error = "HTTP " + std::to_string(res->status) + ": " + msg;
            if (res->status >= 500) continue;
            // Client errors are not retried.
            if (path == "/v1/edit") throw PromptError(cfg_.endpoint + path + ": " + last_error);
            if (path == "/v1/embed" && res->status == 422) throw UnsupportedSpace(cfg_.endpoint + path + ": " + last_error);
            throw BackendError(cfg_.endpoint + path + ": " + last_error);
        }
        throw BackendError(cfg_.endpoint + path + ": " + last_error + " (after " + std::to_string(cfg_.retries + 1) +
                           " attempts)");
    }

    RemoteConfig cfg_;
    std::shared_ptr<std::counting_semaphore<1024>> slots_;
    std::shared_ptr<std::atomic<std::uint64_t>> attempts_ = std::make_shared<std::atomic<std::uint64_t>>(0);
};

template <typename T>
T reply_field(const nlohmann::json& reply, const char* key, const std::string& where) {
    if (!reply.is_object() || !reply.contains(key)) throw BackendError(where + ": reply lacks '" + key + "'");
    try {
        return reply.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(where + ": bad '" + key + "': " + e.what());
    }
}

class RemoteEditor final : public Editor {
public:
    RemoteEditor(BackendInfo info, RemoteConfig cfg) : info_(std::move(info)), client_(std::move(cfg)) {
        info_.kind = BackendKind::Remote;
    }
    const BackendInfo& info() const override { return info_; }
    const RemoteClient& client() const { return client_; }

    ImageBuffer edit(const ImageBuffer& img, const std::string& prompt, std::uint64_t seed) const override {
        if (trim(prompt).empty()) throw PromptError("empty prompt");
        const nlohmann::json body = {{"image", encode_image_b64(img)}, {"prompt", prompt}, {"seed", seed}};
        const auto reply = client_.post("/v1/edit", body);
        try {
            return decode_image_b64(reply_field<std::string>(reply, "image", info_.name));
        } catch (const DecodeError& e) {
            throw BackendError(info_.name + ": " + e.what());
        }
    }

private:
    BackendInfo info_;
    RemoteClient client_;
};

class RemoteCaptioner final : public Captioner {
public:
    RemoteCaptioner(BackendInfo info, RemoteConfig cfg) : info_(std::move(info)), client_(std::move(cfg)) {
        info_.kind = BackendKind::Remote;
    }
    const BackendInfo& info() const override { return info_; }

    std::string caption(const ImageBuffer& img) const override {
        const auto reply = client_.post("/v1/caption", {{"image", encode_image_b64(img)}});
        auto c = reply_field<std::string>(reply, "caption", info_.name);
        if (trim(c).empty()) throw BackendError(info_.name + ": empty caption");
        return c;
    }

private:
    BackendInfo info_;
    RemoteClient client_;
};

class RemoteEmbedder final : public Embedder {
public:
    RemoteEmbedder(BackendInfo info, RemoteConfig cfg) : info_(std::move(info)), client_(std::move(cfg)) {
        info_.kind = BackendKind::Remote;
    }
    const BackendInfo& info() const override { return info_; }

    EmbeddingVector embed(const ImageBuffer& img, EmbeddingSpace space) const override {
        const auto reply = client_.post("/v1/embed", {{"image", encode_image_b64(img)}, {"space", to_string(space)}});
        auto v = reply_field<std::vector<double>>(reply, "vector", info_.name);
        for (double x : v)
            if (!std::isfinite(x)) throw BackendError(info_.name + ": non-finite embedding entry");
        if (v.empty()) throw BackendError(info_.name + ": empty embedding");
        return {std::move(v), space};
    }

private:
    BackendInfo info_;
    RemoteClient client_;
};

// GET /v1/info; used to check that an endpoint serves the expected kind.
inline nlohmann::json fetch_remote_info(const RemoteConfig& cfg) { return RemoteClient(cfg).get("/v1/info"); }

}  // namespace edittrack
