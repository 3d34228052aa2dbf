#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pal {

// One phase of the scripted emotional trajectory.
struct Stage {
    std::string name;
    std::string description;
    std::string advance_hint;

    bool operator==(const Stage&) const = default;
};

// A standardized-patient case: demographics, the six case sections, and the
// ordered stage list.
struct PersonaProfile {
    std::string id;
    std::string display_name;
    int age = 0;
    std::string gender;
    std::optional<std::string> profile_image_ref;
    std::string purpose;
    std::string disposition;
    std::string past_medical_history;
    std::string social_history;
    std::string setting;
    std::vector<Stage> stages;
    int initial_stage_index = 0;

    bool operator==(const PersonaProfile&) const = default;
};

enum class Severity { error, warning };

struct ValidationIssue {
    Severity severity = Severity::error;
    std::string field_path;
    std::string message;
};

struct ValidationReport {
    std::string persona_id;
    std::vector<ValidationIssue> issues;

    bool valid() const;
    std::size_t error_count() const;
};

bool is_valid_persona_id(std::string_view id);

// Pure; reports every violated invariant instead of throwing.
ValidationReport validate_persona(const PersonaProfile& profile);

// --- persona files -------------------------------------------------------
//
// One persona per "<anything>.persona.toml" file, written in a TOML subset:
// top-level `key = value` pairs followed by one `[[stage]]` table per stage.
// Values are basic strings ("..."), multi-line basic strings ("""..."""),
// or integers. See docs/persona-format.md for the full grammar.

inline constexpr std::string_view persona_file_suffix = ".persona.toml";

// Throws Error(parse_error) with "<origin>:<line>:<column>: message".
PersonaProfile parse_persona(std::string_view text, std::string_view origin = "<input>");

// Canonical form; parse_persona(serialize_persona(p)) == p.
std::string serialize_persona(const PersonaProfile& profile);

// Per-file result of scanning a library directory. Used by the loader and by
// the `validate` command, which reports instead of failing fast.
struct PersonaFileReport {
    std::filesystem::path path;
    std::optional<PersonaProfile> profile;
    std::optional<std::string> parse_error;
    ValidationReport validation;

    bool ok() const { return profile && !parse_error && validation.valid(); }
};

// Parses and validates every persona file in `directory` (non-recursive),
// including library-level checks: duplicate ids and missing image assets.
// Throws Error(io_error) if the directory is unreadable.
std::vector<PersonaFileReport> scan_persona_library(const std::filesystem::path& directory);

// All personas, ordered by id. Throws Error(io_error) for an unreadable
// directory, Error(parse_error) for the first malformed file, and
// Error(validation_failed) listing every invalid persona.
std::vector<PersonaProfile> load_persona_library(const std::filesystem::path& directory);

// Immutable, id-indexed view over a loaded library. Safe to share across
// threads once built.
class PersonaLibrary {
public:
    PersonaLibrary() = default;
    PersonaLibrary(std::vector<PersonaProfile> personas,
                   std::filesystem::path asset_root = {});

    static PersonaLibrary load(const std::filesystem::path& directory);

    const PersonaProfile* find(std::string_view id) const;
    // Throws Error(persona_not_found).
    const PersonaProfile& at(std::string_view id) const;

    const std::vector<PersonaProfile>& all() const { return personas_; }
    const std::filesystem::path& asset_root() const { return asset_root_; }
    bool empty() const { return personas_.empty(); }
    std::size_t size() const { return personas_.size(); }

private:
    std::vector<PersonaProfile> personas_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::filesystem::path asset_root_;
};

// --- prompt rendering ----------------------------------------------------

// Literal headers the patient prompt always contains, in output order.
inline constexpr std::string_view kPurposeHeader = "# Purpose of the Case";
inline constexpr std::string_view kDispositionHeader = "# Persona of the Patient";
inline constexpr std::string_view kMedicalHistoryHeader = "# Past Medical History";
inline constexpr std::string_view kSocialHistoryHeader = "# Social History";
inline constexpr std::string_view kSettingHeader = "# Setting";
inline constexpr std::string_view kStagesHeader = "# Stages of the Interaction";
inline constexpr std::string_view kCurrentStageHeader = "# Current Stage";
inline constexpr std::string_view kCueHeader = "# Non-verbal Cues";
inline constexpr std::string_view kAdaptationHeader = "# Responding to the Clinician";

// Deterministic system prompt for the patient agent at the given stage.
// Throws contract_error if stage_index is out of range.
std::string render_patient_system_prompt(const PersonaProfile& profile, int stage_index);

} // namespace pal
