#include "pal/providers/sse.hpp"

namespace pal {

std::string format_sse_event(std::string_view event, std::string_view data) {
    std::string out;
    if (!event.empty()) {
        out.append("event: ").append(event).push_back('\n');
    }
    std::size_t pos = 0;
    while (true) {
        std::size_t nl = data.find('\n', pos);
        out.append("data: ").append(data.substr(pos, nl - pos)).push_back('\n');
        if (nl == std::string_view::npos) {
            break;
        }
        pos = nl + 1;
    }
    out.push_back('\n');
    return out;
}

std::vector<SseEvent> SseDecoder::feed(std::string_view chunk) {
    std::vector<SseEvent> out;
    for (char c : chunk) {
        if (pending_cr_) {
            pending_cr_ = false;
            if (c == '\n') {
                continue;
            }
        }
        if (c == '\r' || c == '\n') {
            process_line(buffer_, out);
            buffer_.clear();
            pending_cr_ = c == '\r';
        } else {
            buffer_.push_back(c);
        }
    }
    return out;
}

std::vector<SseEvent> SseDecoder::finish() {
    std::vector<SseEvent> out;
    if (!buffer_.empty()) {
        process_line(buffer_, out);
        buffer_.clear();
    }
    dispatch(out);
    return out;
}

void SseDecoder::process_line(std::string_view line, std::vector<SseEvent>& out) {
    if (line.empty()) {
        dispatch(out);
        return;
    }
    if (line.front() == ':') {
        return;
    }
    std::size_t colon = line.find(':');
    std::string_view field = line.substr(0, colon);
    std::string_view value;
    if (colon != std::string_view::npos) {
        value = line.substr(colon + 1);
        if (!value.empty() && value.front() == ' ') {
            value.remove_prefix(1);
        }
    }
    if (field == "event") {
        current_.event = std::string(value);
    } else if (field == "data") {
        if (has_data_) {
            current_.data.push_back('\n');
        }
        current_.data.append(value);
        has_data_ = true;
    } else if (field == "id") {
        current_.id = std::string(value);
    }
}

void SseDecoder::dispatch(std::vector<SseEvent>& out) {
    if (has_data_) {
        out.push_back(std::move(current_));
    }
    current_ = SseEvent{};
    has_data_ = false;
}

} // namespace pal
