#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pal {

// One server-sent event. `event` is empty for unnamed ("message") events.
struct SseEvent {
    std::string event;
    std::string data;
    std::string id;

    bool operator==(const SseEvent&) const = default;
};

// Serializes an event; multi-line data becomes several `data:` lines.
std::string format_sse_event(std::string_view event, std::string_view data);

// Incremental event-stream decoder. Accepts LF, CRLF and CR line endings and
// lines split across chunks.
class SseDecoder {
public:
    std::vector<SseEvent> feed(std::string_view chunk);
    // Dispatches a trailing event that was not followed by a blank line.
    std::vector<SseEvent> finish();

private:
    void process_line(std::string_view line, std::vector<SseEvent>& out);
    void dispatch(std::vector<SseEvent>& out);

    std::string buffer_;
    bool pending_cr_ = false;
    SseEvent current_;
    bool has_data_ = false;
};

} // namespace pal
