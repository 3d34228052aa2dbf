#include "pal/providers/audio.hpp"

#include "pal/error.hpp"

#include <algorithm>
#include <cctype>

namespace pal {
namespace {

std::uint32_t le32(std::string_view b, std::size_t at) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3])) << 24;
}

std::uint16_t le16(std::string_view b, std::size_t at) {
    return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                      static_cast<unsigned char>(b[at + 1]) << 8);
}

std::uint64_t le64(std::string_view b, std::size_t at) {
    return static_cast<std::uint64_t>(le32(b, at)) |
           static_cast<std::uint64_t>(le32(b, at + 4)) << 32;
}

void put_le(std::string& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

Error invalid(const std::string& why) {
    return Error(Errc::invalid_audio, "invalid audio: " + why);
}

std::int64_t wav_duration_ms(std::string_view b) {
    if (b.size() < 12 || b.substr(0, 4) != "RIFF" || b.substr(8, 4) != "WAVE") {
        throw invalid("not a RIFF/WAVE file");
    }
    std::uint32_t byte_rate = 0;
    std::size_t pos = 12;
    while (pos + 8 <= b.size()) {
        std::string_view id = b.substr(pos, 4);
        std::uint32_t size = le32(b, pos + 4);
        std::size_t body = pos + 8;
        if (id == "fmt ") {
            if (size < 16 || body + 16 > b.size()) {
                throw invalid("truncated fmt chunk");
            }
            std::uint16_t channels = le16(b, body + 2);
            std::uint32_t rate = le32(b, body + 4);
            byte_rate = le32(b, body + 8);
            if (channels == 0 || rate == 0 || byte_rate == 0) {
                throw invalid("bad fmt chunk");
            }
        } else if (id == "data") {
            if (byte_rate == 0) {
                throw invalid("data chunk before fmt chunk");
            }
            std::uint64_t available = b.size() - body;
            // Streaming writers leave the size at 0 or 0xFFFFFFFF.
            std::uint64_t data = (size == 0 || size == 0xFFFFFFFFu) ? available : size;
            if (data > available) {
                throw invalid("truncated data chunk");
            }
            return static_cast<std::int64_t>(data * 1000 / byte_rate);
        }
        pos = body + size + (size & 1);
    }
    throw invalid("no data chunk");
}

std::int64_t ogg_duration_ms(std::string_view b) {
    std::size_t pos = 0;
    bool first = true;
    bool opus = false;
    std::uint32_t vorbis_rate = 0;
    std::uint16_t pre_skip = 0;
    std::uint64_t last_granule = 0;
    while (pos < b.size()) {
        if (pos + 27 > b.size() || b.substr(pos, 4) != "OggS" || b[pos + 4] != 0) {
            throw invalid("bad Ogg page at byte " + std::to_string(pos));
        }
        std::uint64_t granule = le64(b, pos + 6);
        std::size_t segments = static_cast<unsigned char>(b[pos + 26]);
        if (pos + 27 + segments > b.size()) {
            throw invalid("truncated Ogg segment table");
        }
        std::size_t body_len = 0;
        for (std::size_t s = 0; s < segments; ++s) {
            body_len += static_cast<unsigned char>(b[pos + 27 + s]);
        }
        std::size_t body = pos + 27 + segments;
        if (body + body_len > b.size()) {
            throw invalid("truncated Ogg page");
        }
        if (first) {
            std::string_view head = b.substr(body, body_len);
            if (head.size() >= 19 && head.substr(0, 8) == "OpusHead") {
                opus = true;
                pre_skip = le16(head, 10);
            } else if (head.size() >= 16 && head.substr(0, 7) == std::string_view("\x01vorbis", 7)) {
                vorbis_rate = le32(head, 12);
                if (vorbis_rate == 0) {
                    throw invalid("bad Vorbis header");
                }
            } else {
                throw invalid("Ogg stream is neither Opus nor Vorbis");
            }
            first = false;
        }
        if (granule != ~std::uint64_t{0}) {
            last_granule = granule;
        }
        pos = body + body_len;
    }
    if (first) {
        throw invalid("empty Ogg stream");
    }
    if (opus) {
        std::uint64_t samples = last_granule > pre_skip ? last_granule - pre_skip : 0;
        return static_cast<std::int64_t>(samples / 48);
    }
    return static_cast<std::int64_t>(last_granule * 1000 / vorbis_rate);
}

} // namespace

std::string base_media_type(std::string_view media_type) {
    auto semi = media_type.find(';');
    std::string_view base = media_type.substr(0, semi);
    while (!base.empty() && std::isspace(static_cast<unsigned char>(base.back()))) {
        base.remove_suffix(1);
    }
    while (!base.empty() && std::isspace(static_cast<unsigned char>(base.front()))) {
        base.remove_prefix(1);
    }
    std::string out(base);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::optional<AudioContainer> container_for_media_type(std::string_view media_type) {
    std::string base = base_media_type(media_type);
    if (base == "audio/wav" || base == "audio/x-wav" || base == "audio/wave" ||
        base == "audio/vnd.wave") {
        return AudioContainer::wav;
    }
    if (base == "audio/ogg" || base == "audio/opus") {
        return AudioContainer::ogg;
    }
    return std::nullopt;
}

std::int64_t audio_duration_ms(std::string_view bytes, AudioContainer container) {
    switch (container) {
    case AudioContainer::wav: return wav_duration_ms(bytes);
    case AudioContainer::ogg: return ogg_duration_ms(bytes);
    }
    throw invalid("unknown container");
}

std::int64_t check_audio_input(std::string_view bytes, std::string_view media_type) {
    if (bytes.empty()) {
        throw contract_error("audio is empty");
    }
    auto container = container_for_media_type(media_type);
    if (!container) {
        throw Error(Errc::unsupported_media_type,
                    "unsupported media type '" + std::string(media_type) + "'");
    }
    return audio_duration_ms(bytes, *container);
}

std::string make_wav(std::string_view pcm, std::uint32_t sample_rate, std::uint16_t channels,
                     std::uint16_t bits_per_sample) {
    std::string out;
    out.reserve(44 + pcm.size());
    std::uint32_t block_align = channels * bits_per_sample / 8u;
    out += "RIFF";
    put_le(out, 36 + pcm.size(), 4);
    out += "WAVEfmt ";
    put_le(out, 16, 4);
    put_le(out, 1, 2);
    put_le(out, channels, 2);
    put_le(out, sample_rate, 4);
    put_le(out, sample_rate * block_align, 4);
    put_le(out, block_align, 2);
    put_le(out, bits_per_sample, 2);
    out += "data";
    put_le(out, pcm.size(), 4);
    out.append(pcm);
    return out;
}

} // namespace pal
