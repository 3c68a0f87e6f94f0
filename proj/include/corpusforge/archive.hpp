#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "corpusforge/errors.hpp"

namespace corpusforge::archive {

inline bool is_gzip(std::string_view bytes) {
    return bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f &&
           static_cast<unsigned char>(bytes[1]) == 0x8b;
}

inline std::string gunzip(std::string_view bytes) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 32) != Z_OK) throw ParseError("inflateInit failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
    zs.avail_in = static_cast<uInt>(bytes.size());
    std::string out;
    char buf[1 << 15];
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = reinterpret_cast<Bytef*>(buf);
        zs.avail_out = sizeof buf;
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw ParseError("corrupt gzip stream");
        }
        out.append(buf, sizeof buf - zs.avail_out);
        if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) break; // truncated input
    }
    inflateEnd(&zs);
    return out;
}

inline bool is_tar(std::string_view bytes) {
    return bytes.size() >= 512 && bytes.substr(257, 5) == "ustar";
}

// Regular-file members of a ustar archive, keyed by path.
inline std::map<std::string, std::string> untar(std::string_view bytes) {
    std::map<std::string, std::string> files;
    std::size_t pos = 0;
    auto field = [&](std::size_t off, std::size_t len) {
        std::string_view f = bytes.substr(pos + off, len);
        return f.substr(0, f.find('\0'));
    };
    while (pos + 512 <= bytes.size()) {
        if (bytes[pos] == '\0') break; // end-of-archive block
        const std::string name(field(0, 100));
        const std::string prefix(field(345, 155));
        std::uint64_t size = 0;
        for (char c : field(124, 12)) {
            if (c >= '0' && c <= '7') size = size * 8 + static_cast<std::uint64_t>(c - '0');
        }
        const char type = bytes[pos + 156];
        pos += 512;
        if (pos + size > bytes.size()) throw ParseError("truncated tar member " + name);
        if (type == '0' || type == '\0') {
            files[prefix.empty() ? name : prefix + "/" + name] = std::string(bytes.substr(pos, size));
        }
        pos += (size + 511) / 512 * 512;
    }
    return files;
}

namespace detail {

inline bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

// Inline \input{x} / \include{x} from sibling members, bounded depth.
inline std::string expand_inputs(const std::string& tex, const std::map<std::string, std::string>& files,
                                 int depth) {
    if (depth > 8) return tex;
    std::string out;
    std::size_t i = 0;
    while (i < tex.size()) {
        std::size_t hit = std::string::npos;
        std::size_t cmd_len = 0;
        for (std::string_view cmd : {std::string_view("\\input{"), std::string_view("\\include{")}) {
            const auto p = tex.find(cmd, i);
            if (p < hit) {
                hit = p;
                cmd_len = cmd.size();
            }
        }
        if (hit == std::string::npos) break;
        const auto close = tex.find('}', hit + cmd_len);
        if (close == std::string::npos) break;
        out.append(tex, i, hit - i);
        std::string name = tex.substr(hit + cmd_len, close - hit - cmd_len);
        auto it = files.find(name);
        if (it == files.end()) it = files.find(name + ".tex");
        if (it != files.end()) out += expand_inputs(it->second, files, depth + 1);
        i = close + 1;
    }
    out.append(tex, i, std::string::npos);
    return out;
}

} // namespace detail

// LaTeX text from an arXiv-style source payload: a gzipped tarball, a gzipped
// single file, or plain text. For tarballs the main file is the member that
// holds \begin{document}; \input members are spliced in.
inline std::string extract_latex_source(std::string_view payload) {
    std::string bytes = is_gzip(payload) ? gunzip(payload) : std::string(payload);
    if (!is_tar(bytes)) return bytes;
    const auto files = untar(bytes);
    const std::string* main = nullptr;
    for (const auto& [name, body] : files) {
        if (!detail::ends_with(name, ".tex")) continue;
        if (body.find("\\begin{document}") != std::string::npos) {
            main = &body;
            break;
        }
        if (!main) main = &body;
    }
    if (!main) throw ParseError("source archive contains no .tex member");
    return detail::expand_inputs(*main, files, 0);
}

} // namespace corpusforge::archive
