#include "pal/transcript.hpp"

#include "pal/error.hpp"

namespace pal {
namespace {

constexpr std::string_view kDoctorPrefix = "Doctor:";
constexpr std::string_view kPatientPrefix = "Patient:";

std::string single_line(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

} // namespace

std::string render_transcript(std::span<const Turn> turns) {
    std::string out;
    for (const auto& turn : turns) {
        if (turn.role == Role::clinician) {
            out.append(kDoctorPrefix).append(" ").append(single_line(turn.text));
        } else {
            out.append(kPatientPrefix).append(" ");
            out += single_line(render_cue_markup(turn.text, turn.cues, '[', ']'));
        }
        out.push_back('\n');
    }
    return out;
}

std::vector<Turn> parse_transcript(std::string_view text, std::string_view origin) {
    std::vector<Turn> turns;
    bool has_doctor = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        Turn turn;
        turn.index = static_cast<int>(turns.size());
        if (line.starts_with(kDoctorPrefix)) {
            turn.role = Role::clinician;
            turn.text = std::string(trim(line.substr(kDoctorPrefix.size())));
            turn.raw_text = turn.text;
            has_doctor = true;
        } else if (line.starts_with(kPatientPrefix)) {
            turn.role = Role::patient;
            CueParse parsed = parse_cue_markup(trim(line.substr(kPatientPrefix.size())), '[', ']');
            turn.text = std::move(parsed.text);
            turn.raw_text = render_cue_markup(turn.text, parsed.cues);
            turn.cues = parse_emotional_cues(turn.raw_text).cues;
        } else {
            throw Error(Errc::parse_error, std::string(origin) + ":" + std::to_string(line_no) +
                                               ": expected 'Doctor:' or 'Patient:'");
        }
        turns.push_back(std::move(turn));
    }
    if (!has_doctor) {
        throw Error(Errc::parse_error, std::string(origin) + ": transcript has no Doctor line");
    }
    return turns;
}

} // namespace pal
