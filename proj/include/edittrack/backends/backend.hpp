#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "edittrack/error.hpp"
#include "edittrack/image.hpp"

namespace edittrack {

enum class EmbeddingSpace { Semantic, Perceptual };

inline std::string to_string(EmbeddingSpace s) {
    return s == EmbeddingSpace::Semantic ? "semantic" : "perceptual";
}

inline EmbeddingSpace parse_embedding_space(const std::string& s) {
    if (s == "semantic") return EmbeddingSpace::Semantic;
    if (s == "perceptual") return EmbeddingSpace::Perceptual;
    throw UnsupportedSpace("unknown embedding space '" + s + "'");
}

struct EmbeddingVector {
    std::vector<double> values;
    EmbeddingSpace space = EmbeddingSpace::Semantic;
};

enum class BackendKind { Simulated, Remote };

// Identity shared by every backend handle; feeds the registry fingerprint.
struct BackendInfo {
    std::string name;
    BackendKind kind = BackendKind::Simulated;
    std::string version;
};

class Editor {
public:
    virtual ~Editor() = default;
    virtual const BackendInfo& info() const = 0;
    // Returns an image at the input resolution. Must be safe to call
    // concurrently.
    virtual ImageBuffer edit(const ImageBuffer& img, const std::string& prompt, std::uint64_t seed) const = 0;
};

class Captioner {
public:
    virtual ~Captioner() = default;
    virtual const BackendInfo& info() const = 0;
    virtual std::string caption(const ImageBuffer& img) const = 0;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual const BackendInfo& info() const = 0;
    virtual EmbeddingVector embed(const ImageBuffer& img, EmbeddingSpace space) const = 0;
};

}  // namespace edittrack
