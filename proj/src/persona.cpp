#include "pal/persona.hpp"

#include "pal/error.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace pal {
namespace {

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r';
    });
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::io_error, "cannot read " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool has_persona_suffix(const std::filesystem::path& p) {
    return p.filename().string().ends_with(persona_file_suffix);
}

} // namespace

bool ValidationReport::valid() const {
    return error_count() == 0;
}

std::size_t ValidationReport::error_count() const {
    return static_cast<std::size_t>(std::count_if(
        issues.begin(), issues.end(),
        [](const ValidationIssue& i) { return i.severity == Severity::error; }));
}

bool is_valid_persona_id(std::string_view id) {
    return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
    });
}

ValidationReport validate_persona(const PersonaProfile& p) {
    ValidationReport report{p.id, {}};
    auto error = [&](std::string path, std::string message) {
        report.issues.push_back({Severity::error, std::move(path), std::move(message)});
    };
    auto warning = [&](std::string path, std::string message) {
        report.issues.push_back({Severity::warning, std::move(path), std::move(message)});
    };

    if (p.id.empty()) {
        error("id", "id is empty");
    } else if (!is_valid_persona_id(p.id)) {
        error("id", "id may contain only lowercase letters, digits and '-'");
    }
    if (is_blank(p.display_name)) {
        warning("display_name", "display name is empty");
    }
    if (p.age < 0) {
        error("age", "age must be >= 0");
    } else if (p.age > 130) {
        warning("age", "age above 130");
    }
    if (is_blank(p.gender)) {
        warning("gender", "gender is empty");
    }

    const std::pair<const char*, const std::string*> sections[] = {
        {"purpose", &p.purpose},
        {"disposition", &p.disposition},
        {"past_medical_history", &p.past_medical_history},
        {"social_history", &p.social_history},
        {"setting", &p.setting},
    };
    for (const auto& [name, text] : sections) {
        if (is_blank(*text)) {
            error(name, std::string(name) + " section is empty");
        }
    }

    if (p.stages.empty()) {
        error("stages", "at least one stage is required");
    }
    std::set<std::string_view> names;
    for (std::size_t i = 0; i < p.stages.size(); ++i) {
        const Stage& s = p.stages[i];
        std::string base = "stages[" + std::to_string(i) + "]";
        if (is_blank(s.name)) {
            error(base + ".name", "stage name is empty");
        } else if (!names.insert(s.name).second) {
            error(base + ".name", "duplicate stage name '" + s.name + "'");
        }
        if (is_blank(s.description)) {
            error(base + ".description", "stage description is empty");
        }
        if (i + 1 < p.stages.size() && is_blank(s.advance_hint)) {
            warning(base + ".advance_hint", "no hint for moving to the next stage");
        }
    }
    if (p.initial_stage_index < 0 ||
        static_cast<std::size_t>(p.initial_stage_index) >= p.stages.size()) {
        error("initial_stage_index", "initial stage " + std::to_string(p.initial_stage_index) +
                                         " is outside the stage list");
    }
    return report;
}

std::vector<PersonaFileReport> scan_persona_library(const std::filesystem::path& directory) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(directory, ec)) {
        throw Error(Errc::io_error, "persona directory not readable: " + directory.string());
    }
    std::vector<fs::path> files;
    fs::directory_iterator it(directory, ec);
    if (ec) {
        throw Error(Errc::io_error,
                    "persona directory not readable: " + directory.string() + ": " + ec.message());
    }
    for (const auto& entry : it) {
        if (entry.is_regular_file() && has_persona_suffix(entry.path())) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());

    std::vector<PersonaFileReport> reports;
    for (const auto& path : files) {
        PersonaFileReport r;
        r.path = path;
        try {
            r.profile = parse_persona(read_file(path), path.string());
            r.validation = validate_persona(*r.profile);
        } catch (const Error& e) {
            r.parse_error = e.what();
            r.validation.persona_id = path.filename().string();
        }
        reports.push_back(std::move(r));
    }

    // Library-level checks.
    std::map<std::string, fs::path> seen;
    for (auto& r : reports) {
        if (!r.profile) {
            continue;
        }
        const auto& p = *r.profile;
        if (!p.id.empty()) {
            auto [pos, inserted] = seen.emplace(p.id, r.path);
            if (!inserted) {
                r.validation.issues.push_back(
                    {Severity::error, "id",
                     "duplicate id '" + p.id + "' (also in " + pos->second.filename().string() + ")"});
            }
        }
        if (p.profile_image_ref) {
            fs::path image = directory / *p.profile_image_ref;
            if (fs::path(*p.profile_image_ref).is_absolute() ||
                !fs::is_regular_file(image, ec)) {
                r.validation.issues.push_back({Severity::warning, "profile_image_ref",
                                               "image not found: " + *p.profile_image_ref});
            }
        }
    }
    return reports;
}

std::vector<PersonaProfile> load_persona_library(const std::filesystem::path& directory) {
    auto reports = scan_persona_library(directory);
    for (const auto& r : reports) {
        if (r.parse_error) {
            throw Error(Errc::parse_error, *r.parse_error);
        }
    }
    std::string failures;
    for (const auto& r : reports) {
        if (r.validation.valid()) {
            continue;
        }
        failures += "\n  " + r.path.filename().string() + " (" + r.validation.persona_id + "):";
        for (const auto& issue : r.validation.issues) {
            if (issue.severity == Severity::error) {
                failures += "\n    " + issue.field_path + ": " + issue.message;
            }
        }
    }
    if (!failures.empty()) {
        throw Error(Errc::validation_failed, "invalid personas:" + failures);
    }
    std::vector<PersonaProfile> out;
    out.reserve(reports.size());
    for (auto& r : reports) {
        out.push_back(std::move(*r.profile));
    }
    std::sort(out.begin(), out.end(),
              [](const PersonaProfile& a, const PersonaProfile& b) { return a.id < b.id; });
    return out;
}

PersonaLibrary::PersonaLibrary(std::vector<PersonaProfile> personas,
                               std::filesystem::path asset_root)
    : personas_(std::move(personas)), asset_root_(std::move(asset_root)) {
    std::sort(personas_.begin(), personas_.end(),
              [](const PersonaProfile& a, const PersonaProfile& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < personas_.size(); ++i) {
        if (!index_.emplace(personas_[i].id, i).second) {
            throw Error(Errc::validation_failed, "duplicate persona id " + personas_[i].id);
        }
    }
}

PersonaLibrary PersonaLibrary::load(const std::filesystem::path& directory) {
    return PersonaLibrary(load_persona_library(directory), directory);
}

const PersonaProfile* PersonaLibrary::find(std::string_view id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &personas_[it->second];
}

const PersonaProfile& PersonaLibrary::at(std::string_view id) const {
    if (const auto* p = find(id)) {
        return *p;
    }
    throw Error(Errc::persona_not_found, "unknown persona '" + std::string(id) + "'");
}

std::string render_patient_system_prompt(const PersonaProfile& p, int stage_index) {
    if (stage_index < 0 || static_cast<std::size_t>(stage_index) >= p.stages.size()) {
        throw contract_error("stage index " + std::to_string(stage_index) +
                             " out of range for persona '" + p.id + "' with " +
                             std::to_string(p.stages.size()) + " stages");
    }
    const Stage& current = p.stages[static_cast<std::size_t>(stage_index)];
    std::string out;
    auto section = [&](std::string_view header, std::string_view body) {
        out.append(header).append("\n").append(body).append("\n\n");
    };

    out += "You are role-playing a patient in a simulated clinical conversation that clinicians "
           "use to practice serious-illness communication. You are the patient, ";
    out += p.display_name;
    out += ". The other person is the clinician. Speak only as the patient: never write the "
           "clinician's lines, never give medical advice, and never step out of character or "
           "mention that this is a simulation.\n\n";

    out += "# Patient\n";
    out += "Name: " + p.display_name + "\n";
    out += "Age: " + std::to_string(p.age) + "\n";
    out += "Gender: " + p.gender + "\n\n";

    section(kPurposeHeader, p.purpose);
    section(kDispositionHeader, p.disposition);
    section(kMedicalHistoryHeader, p.past_medical_history);
    section(kSocialHistoryHeader, p.social_history);
    section(kSettingHeader, p.setting);

    out.append(kStagesHeader).append("\n");
    for (std::size_t i = 0; i < p.stages.size(); ++i) {
        const Stage& s = p.stages[i];
        out += std::to_string(i + 1) + ". " + s.name + ": " + s.description + "\n";
        if (!s.advance_hint.empty()) {
            out += "   Moves on when: " + s.advance_hint + "\n";
        }
    }
    out += "\n";

    out.append(kCurrentStageHeader).append("\n");
    out += "You are in stage " + std::to_string(stage_index + 1) + " of " +
           std::to_string(p.stages.size()) + ": " + current.name + ".\n";
    out += current.description + "\n";
    if (!current.advance_hint.empty()) {
        out += "Stay in this stage until the clinician does the following, then let your "
               "reactions move on naturally: " +
               current.advance_hint + "\n";
    }
    out += "\n";

    out.append(kCueHeader).append("\n");
    out += "Show non-verbal behavior such as pausing, sighing, crying or hesitating as a short "
           "action between single asterisks, for example *pauses* or *starts crying*. Keep each "
           "action on one line and do not use asterisks for anything else.\n\n";

    out.append(kAdaptationHeader).append("\n");
    out += "Let your tone and emotions follow how the clinician communicates. When the clinician "
           "names or acknowledges your feelings, shows understanding or respect, offers support, "
           "or invites you to say more, gradually open up and feel heard. When the clinician is "
           "rushed, dismissive, or uses medical jargon, become more guarded, confused, or upset. "
           "Reply only with what the patient says and does, in a few sentences.\n";
    return out;
}

} // namespace pal
