#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <variant>

#include "dvhn/errors.hpp"
#include "dvhn/solver.hpp"

namespace dvhn {

namespace {

using Field = std::variant<int TrainConfig::*, double TrainConfig::*, std::uint64_t TrainConfig::*>;

struct KeyEntry {
    std::string_view key;
    Field field;
};

constexpr std::array<KeyEntry, 22> kKeys{{
    {"bits_K", &TrainConfig::bits_K},
    {"margin_alpha", &TrainConfig::margin_alpha},
    {"lr", &TrainConfig::lr},
    {"weight_decay", &TrainConfig::weight_decay},
    {"beta1", &TrainConfig::beta1},
    {"beta2", &TrainConfig::beta2},
    {"lambda", &TrainConfig::lambda},
    {"sigma", &TrainConfig::sigma},
    {"mu", &TrainConfig::mu},
    {"nu", &TrainConfig::nu},
    {"eta", &TrainConfig::eta},
    {"P", &TrainConfig::P},
    {"K1", &TrainConfig::K1},
    {"inner_iters", &TrainConfig::inner_iters},
    {"outer_iters_T", &TrainConfig::outer_iters_T},
    {"seed", &TrainConfig::seed},
    {"adapter_depth", &TrainConfig::adapter_depth},
    {"adapter_width", &TrainConfig::adapter_width},
    {"dcc_sweeps", &TrainConfig::dcc_sweeps},
    {"convergence_tol", &TrainConfig::convergence_tol},
    {"convergence_window", &TrainConfig::convergence_window},
    {"threads", &TrainConfig::threads},
}};

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw ValidationError("config key '" + std::string(key) + "': cannot parse '" +
                              std::string(text) + "'");
    }
    return value;
}

}  // namespace

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw ValidationError("config: " + what); };
    if (bits_K < 1) fail("bits_K must be >= 1");
    for (double v : {margin_alpha, lr, weight_decay, lambda, sigma, nu, eta, convergence_tol}) {
        if (!(v >= 0.0) || !std::isfinite(v)) fail("coefficients must be finite and >= 0");
    }
    if (!(mu > 0.0) || !std::isfinite(mu)) fail("mu must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        fail("beta1 and beta2 must lie in [0, 1)");
    }
    if (P < 2 || K1 < 2) fail("P and K1 must be >= 2");
    if (inner_iters < 0 || outer_iters_T < 0) fail("iteration counts must be >= 0");
    if (adapter_depth < 0 || adapter_width < 0) fail("adapter_depth/adapter_width must be >= 0");
    if (dcc_sweeps < 1) fail("dcc_sweeps must be >= 1");
    if (convergence_window < 1) fail("convergence_window must be >= 1");
    if (threads < 1) fail("threads must be >= 1");
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& e : kKeys) keys.emplace_back(e.key);
    return keys;
}

void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
    value = trim(value);
    for (const auto& e : kKeys) {
        if (e.key != key) continue;
        std::visit(
            [&](auto member) {
                using T = std::remove_reference_t<decltype(cfg.*member)>;
                cfg.*member = parse_number<T>(key, value);
            },
            e.field);
        return;
    }
    throw ValidationError("unknown config key '" + std::string(key) + "'");
}

TrainConfig parse_config(std::string_view text, TrainConfig base) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ValidationError("config line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
        }
        set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), base);
}

std::string format_config(const TrainConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    for (const auto& e : kKeys) {
        out << e.key << " = ";
        std::visit([&](auto member) { out << cfg.*member; }, e.field);
        out << '\n';
    }
    return out.str();
}

}  // namespace dvhn
