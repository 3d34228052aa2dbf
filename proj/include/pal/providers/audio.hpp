#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace pal {

// Accepted upload containers:
//   wav - RIFF/WAVE with PCM data ("audio/wav", "audio/x-wav", "audio/wave")
//   ogg - Ogg with Opus or Vorbis ("audio/ogg", "audio/opus")
enum class AudioContainer { wav, ogg };

// Lowercased type without parameters: "Audio/Ogg; codecs=opus" -> "audio/ogg".
std::string base_media_type(std::string_view media_type);

std::optional<AudioContainer> container_for_media_type(std::string_view media_type);

// Playback length in milliseconds read from the container headers.
// Throws Error(invalid_audio) for truncated or inconsistent data.
std::int64_t audio_duration_ms(std::string_view bytes, AudioContainer container);

// Input checks shared by every STT adapter. Throws contract_error for empty
// audio, Error(unsupported_media_type) naming the type, or
// Error(invalid_audio). Returns the duration in milliseconds.
std::int64_t check_audio_input(std::string_view bytes, std::string_view media_type);

// 44-byte canonical PCM WAV header followed by `pcm`.
std::string make_wav(std::string_view pcm, std::uint32_t sample_rate, std::uint16_t channels,
                     std::uint16_t bits_per_sample);

} // namespace pal
