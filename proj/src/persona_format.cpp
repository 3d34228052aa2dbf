#include "pal/persona.hpp"

#include "pal/error.hpp"

#include <charconv>
#include <set>

namespace pal {
namespace {

class PersonaParser {
public:
    PersonaParser(std::string_view text, std::string_view origin)
        : text_(text), origin_(origin) {}

    PersonaProfile parse() {
        while (!at_end()) {
            skip_blank();
            if (at_end()) {
                break;
            }
            if (peek() == '[') {
                parse_table_header();
            } else {
                parse_key_value();
            }
        }
        return std::move(profile_);
    }

private:
    [[noreturn]] void fail(const std::string& message) const { fail_at(pos_, message); }

    [[noreturn]] void fail_at(std::size_t pos, const std::string& message) const {
        std::size_t line = 1;
        std::size_t col = 1;
        for (std::size_t i = 0; i < pos && i < text_.size(); ++i) {
            if (text_[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw Error(Errc::parse_error, std::string(origin_) + ":" + std::to_string(line) +
                                           ":" + std::to_string(col) + ": " + message);
    }

    bool at_end() const { return pos_ >= text_.size(); }
    char peek(std::size_t ahead = 0) const {
        return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
    }
    bool starts_with(std::string_view s) const { return text_.substr(pos_).starts_with(s); }

    void skip_spaces() {
        while (!at_end() && (peek() == ' ' || peek() == '\t')) {
            ++pos_;
        }
    }

    // Whitespace, newlines and comments between statements.
    void skip_blank() {
        while (!at_end()) {
            char c = peek();
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                ++pos_;
            } else if (c == '#') {
                skip_comment();
            } else {
                break;
            }
        }
    }

    void skip_comment() {
        while (!at_end() && peek() != '\n') {
            ++pos_;
        }
    }

    void expect_line_end() {
        skip_spaces();
        if (peek() == '#') {
            skip_comment();
        }
        if (peek() == '\r') {
            ++pos_;
        }
        if (!at_end() && peek() != '\n') {
            fail("expected end of line");
        }
        if (!at_end()) {
            ++pos_;
        }
    }

    void parse_table_header() {
        std::size_t start = pos_;
        if (!starts_with("[[")) {
            fail("only [[stage]] tables are supported");
        }
        pos_ += 2;
        skip_spaces();
        std::string name = parse_bare_key();
        skip_spaces();
        if (!starts_with("]]")) {
            fail("expected ']]'");
        }
        pos_ += 2;
        if (name != "stage") {
            fail_at(start, "unknown table [[" + name + "]]");
        }
        profile_.stages.emplace_back();
        stage_keys_.clear();
        in_stage_ = true;
        expect_line_end();
    }

    std::string parse_bare_key() {
        std::size_t start = pos_;
        while (!at_end()) {
            char c = peek();
            bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c == '_' || c == '-';
            if (!ok) {
                break;
            }
            ++pos_;
        }
        if (start == pos_) {
            fail("expected a key");
        }
        return std::string(text_.substr(start, pos_ - start));
    }

    void parse_key_value() {
        std::size_t key_pos = pos_;
        std::string key = parse_bare_key();
        skip_spaces();
        if (peek() != '=') {
            fail("expected '=' after key '" + key + "'");
        }
        ++pos_;
        skip_spaces();

        auto& seen = in_stage_ ? stage_keys_ : top_keys_;
        if (!seen.insert(key).second) {
            fail_at(key_pos, "duplicate key '" + key + "'");
        }

        if (in_stage_) {
            Stage& stage = profile_.stages.back();
            if (key == "name") {
                stage.name = parse_string_value(key);
            } else if (key == "description") {
                stage.description = parse_string_value(key);
            } else if (key == "advance_hint") {
                stage.advance_hint = parse_string_value(key);
            } else {
                fail_at(key_pos, "unknown stage key '" + key + "'");
            }
        } else if (key == "id") {
            profile_.id = parse_string_value(key);
        } else if (key == "display_name") {
            profile_.display_name = parse_string_value(key);
        } else if (key == "age") {
            profile_.age = parse_integer_value(key);
        } else if (key == "gender") {
            profile_.gender = parse_string_value(key);
        } else if (key == "profile_image") {
            profile_.profile_image_ref = parse_string_value(key);
        } else if (key == "initial_stage") {
            profile_.initial_stage_index = parse_integer_value(key);
        } else if (key == "purpose") {
            profile_.purpose = parse_string_value(key);
        } else if (key == "disposition") {
            profile_.disposition = parse_string_value(key);
        } else if (key == "past_medical_history") {
            profile_.past_medical_history = parse_string_value(key);
        } else if (key == "social_history") {
            profile_.social_history = parse_string_value(key);
        } else if (key == "setting") {
            profile_.setting = parse_string_value(key);
        } else {
            fail_at(key_pos, "unknown key '" + key + "'");
        }
        expect_line_end();
    }

    int parse_integer_value(const std::string& key) {
        std::size_t start = pos_;
        if (peek() == '+' || peek() == '-') {
            ++pos_;
        }
        while (!at_end() && peek() >= '0' && peek() <= '9') {
            ++pos_;
        }
        std::string_view digits = text_.substr(start, pos_ - start);
        if (!digits.empty() && digits.front() == '+') {
            digits.remove_prefix(1);
        }
        int value = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
        if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty()) {
            fail_at(start, "'" + key + "' must be an integer");
        }
        return value;
    }

    std::string parse_string_value(const std::string& key) {
        if (starts_with("\"\"\"")) {
            pos_ += 3;
            return parse_basic(true);
        }
        if (starts_with("'''")) {
            pos_ += 3;
            return parse_literal(true);
        }
        if (peek() == '"') {
            ++pos_;
            return parse_basic(false);
        }
        if (peek() == '\'') {
            ++pos_;
            return parse_literal(false);
        }
        fail("'" + key + "' must be a string");
    }

    // Number of consecutive quote characters at pos_.
    std::size_t quote_run(char q) const {
        std::size_t n = 0;
        while (pos_ + n < text_.size() && text_[pos_ + n] == q) {
            ++n;
        }
        return n;
    }

    void trim_leading_newline() {
        if (starts_with("\r\n")) {
            pos_ += 2;
        } else if (peek() == '\n') {
            ++pos_;
        }
    }

    std::string parse_basic(bool multiline) {
        std::string out;
        if (multiline) {
            trim_leading_newline();
        }
        while (true) {
            if (at_end()) {
                fail("unterminated string");
            }
            char c = peek();
            if (c == '"') {
                if (!multiline) {
                    ++pos_;
                    return out;
                }
                std::size_t run = quote_run('"');
                if (run >= 3) {
                    if (run > 5) {
                        fail("too many quotes");
                    }
                    out.append(run - 3, '"');
                    pos_ += run;
                    return out;
                }
                out.append(run, '"');
                pos_ += run;
                continue;
            }
            if (c == '\\') {
                ++pos_;
                parse_escape(out, multiline);
                continue;
            }
            if (c == '\n') {
                if (!multiline) {
                    fail("newline in single-line string");
                }
                out.push_back(c);
                ++pos_;
                continue;
            }
            auto uc = static_cast<unsigned char>(c);
            if ((uc < 0x20 && c != '\t' && !(multiline && c == '\r')) || uc == 0x7f) {
                fail("control character in string");
            }
            out.push_back(c);
            ++pos_;
        }
    }

    void parse_escape(std::string& out, bool multiline) {
        if (at_end()) {
            fail("unterminated escape");
        }
        char e = peek();
        // Line-ending backslash: drop the newline and following whitespace.
        if (multiline && (e == ' ' || e == '\t' || e == '\n' || e == '\r')) {
            std::size_t p = pos_;
            while (p < text_.size() && (text_[p] == ' ' || text_[p] == '\t')) {
                ++p;
            }
            if (p < text_.size() && (text_[p] == '\n' || text_[p] == '\r')) {
                pos_ = p;
                while (!at_end() && (peek() == ' ' || peek() == '\t' || peek() == '\n' ||
                                     peek() == '\r')) {
                    ++pos_;
                }
                return;
            }
            fail("invalid escape");
        }
        ++pos_;
        switch (e) {
        case 'b': out.push_back('\b'); return;
        case 't': out.push_back('\t'); return;
        case 'n': out.push_back('\n'); return;
        case 'f': out.push_back('\f'); return;
        case 'r': out.push_back('\r'); return;
        case '"': out.push_back('"'); return;
        case '\\': out.push_back('\\'); return;
        case 'u': append_codepoint(out, parse_hex(4)); return;
        case 'U': append_codepoint(out, parse_hex(8)); return;
        default: --pos_; fail(std::string("invalid escape '\\") + e + "'");
        }
    }

    std::uint32_t parse_hex(std::size_t digits) {
        std::uint32_t v = 0;
        for (std::size_t i = 0; i < digits; ++i) {
            char c = peek();
            int d;
            if (c >= '0' && c <= '9') {
                d = c - '0';
            } else if (c >= 'a' && c <= 'f') {
                d = c - 'a' + 10;
            } else if (c >= 'A' && c <= 'F') {
                d = c - 'A' + 10;
            } else {
                fail("invalid unicode escape");
            }
            v = v * 16 + static_cast<std::uint32_t>(d);
            ++pos_;
        }
        return v;
    }

    void append_codepoint(std::string& out, std::uint32_t cp) {
        if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            fail("invalid unicode scalar value");
        }
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }

    std::string parse_literal(bool multiline) {
        std::string out;
        if (multiline) {
            trim_leading_newline();
        }
        while (true) {
            if (at_end()) {
                fail("unterminated string");
            }
            char c = peek();
            if (c == '\'') {
                if (!multiline) {
                    ++pos_;
                    return out;
                }
                std::size_t run = quote_run('\'');
                if (run >= 3) {
                    if (run > 5) {
                        fail("too many quotes");
                    }
                    out.append(run - 3, '\'');
                    pos_ += run;
                    return out;
                }
                out.append(run, '\'');
                pos_ += run;
                continue;
            }
            if (c == '\n' && !multiline) {
                fail("newline in single-line string");
            }
            out.push_back(c);
            ++pos_;
        }
    }

    std::string_view text_;
    std::string_view origin_;
    std::size_t pos_ = 0;
    PersonaProfile profile_;
    bool in_stage_ = false;
    std::set<std::string> top_keys_;
    std::set<std::string> stage_keys_;
};

std::string quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        case '\r': out += "\\r"; break;
        case '\b': out += "\\b"; break;
        case '\f': out += "\\f"; break;
        default: {
            auto uc = static_cast<unsigned char>(c);
            if (uc < 0x20 || uc == 0x7f) {
                static constexpr char hex[] = "0123456789ABCDEF";
                out += "\\u00";
                out.push_back(hex[uc >> 4]);
                out.push_back(hex[uc & 0xf]);
            } else {
                out.push_back(c);
            }
        }
        }
    }
    out.push_back('"');
    return out;
}

} // namespace

PersonaProfile parse_persona(std::string_view text, std::string_view origin) {
    return PersonaParser(text, origin).parse();
}

std::string serialize_persona(const PersonaProfile& p) {
    std::string out;
    auto line = [&](std::string_view key, const std::string& value) {
        out.append(key).append(" = ").append(value).push_back('\n');
    };
    line("id", quote(p.id));
    line("display_name", quote(p.display_name));
    line("age", std::to_string(p.age));
    line("gender", quote(p.gender));
    if (p.profile_image_ref) {
        line("profile_image", quote(*p.profile_image_ref));
    }
    line("initial_stage", std::to_string(p.initial_stage_index));
    out.push_back('\n');
    line("purpose", quote(p.purpose));
    line("disposition", quote(p.disposition));
    line("past_medical_history", quote(p.past_medical_history));
    line("social_history", quote(p.social_history));
    line("setting", quote(p.setting));
    for (const auto& stage : p.stages) {
        out += "\n[[stage]]\n";
        line("name", quote(stage.name));
        line("description", quote(stage.description));
        line("advance_hint", quote(stage.advance_hint));
    }
    return out;
}

} // namespace pal
