#include "pal/providers/provider.hpp"

namespace pal {

std::string_view to_string(ChatMessage::Role role) {
    switch (role) {
    case ChatMessage::Role::system: return "system";
    case ChatMessage::Role::user: return "user";
    case ChatMessage::Role::assistant: return "assistant";
    }
    return "user";
}

std::string_view to_string(ProviderFailure failure) {
    switch (failure) {
    case ProviderFailure::timeout: return "timeout";
    case ProviderFailure::transport: return "transport";
    case ProviderFailure::http_status: return "http_status";
    case ProviderFailure::malformed_response: return "malformed_response";
    case ProviderFailure::not_configured: return "not_configured";
    }
    return "transport";
}

bool is_retryable(ProviderFailure failure, int http_status) {
    switch (failure) {
    case ProviderFailure::timeout:
    case ProviderFailure::transport:
        return true;
    case ProviderFailure::http_status:
        return http_status == 408 || http_status == 409 || http_status == 425 ||
               http_status == 429 || http_status >= 500;
    case ProviderFailure::malformed_response:
    case ProviderFailure::not_configured:
        return false;
    }
    return false;
}

ChatProvider::Completion ChatProvider::chat_complete(const std::vector<ChatMessage>& messages,
                                                     const ChatParams& params) {
    Completion out;
    out.usage = chat_stream(messages, params,
                            [&](std::string_view chunk) { out.text.append(chunk); });
    return out;
}

} // namespace pal
