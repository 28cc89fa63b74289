// Command-line front end: settings layering (defaults < environment <
// config file < explicit flags), the six subcommand runners, and the
// run.cfg snapshot written next to every artifact directory so any run can
// be reproduced from its own output.
#pragma once

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace absa::cli {

// Flat string-to-string settings; keys are namespaced per subcommand
// ("prepare.dataset", "train.lr", ...). Values stay verbatim strings until
// a runner parses them, so a snapshot round-trips byte-identically.
using Settings = std::map<std::string, std::string>;

class SettingsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;      // bad flags, bad inputs, bad files
inline constexpr int kExitDiverged = 3;   // training loss left the finite range

// The full key set (with default values) for one subcommand. Throws
// SettingsError for an unknown subcommand name.
Settings default_settings(const std::string& subcommand);

// Parses "key=value" lines ('#' comments and blank lines allowed; the value
// is everything after the first '=', trimmed). Throws SettingsError naming
// the line on anything else.
Settings parse_config_text(std::string_view text);
Settings load_config_file(const std::string& path);

// Overlays every entry of `over` whose key starts with `prefix` onto `base`.
// Keys outside the prefix are ignored (one snapshot can carry several
// subcommands); a prefixed key absent from `base` is an unknown setting and
// throws SettingsError.
void apply_overrides(Settings& base, const Settings& over,
                     const std::string& prefix);

// Rewrites <run_dir>/run.cfg: existing entries are kept, entries present in
// `resolved` are replaced, output is sorted by key. Rerunning a subcommand
// with identical settings leaves the file byte-identical.
void write_run_cfg(const std::string& run_dir, const Settings& resolved);

// Typed accessors; all throw SettingsError naming the key on a missing key
// or an unparsable value.
const std::string& get(const Settings& s, const std::string& key);
long get_long(const Settings& s, const std::string& key);
double get_double(const Settings& s, const std::string& key);
bool get_bool(const Settings& s, const std::string& key);

// Subcommand runners. Each returns a process exit code and writes
// human-readable progress to `out` and one-line "error: ..." diagnostics to
// `err`. Runners never throw.
int run_prepare(const Settings& s, std::ostream& out, std::ostream& err);
int run_train(const Settings& s, std::ostream& out, std::ostream& err);
int run_eval(const Settings& s, std::ostream& out, std::ostream& err);
int run_predict(const Settings& s, const std::string& review,
                const std::string& aspect, std::ostream& out,
                std::ostream& err);
int run_enrich(const Settings& s, std::istream& in, std::ostream& out,
               std::ostream& err);
int run_tokenize(const Settings& s, std::istream& in, std::ostream& out,
                 std::ostream& err);

}  // namespace absa::cli
