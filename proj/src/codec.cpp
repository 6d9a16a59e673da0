#include "acpp/codec.hpp"

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "acpp/common.hpp"
#include "acpp/metrics.hpp"

namespace fs = std::filesystem;

namespace acpp {

namespace {

int count_occurrences(const std::string& s, const std::string& token) {
    int n = 0;
    for (size_t pos = s.find(token); pos != std::string::npos; pos = s.find(token, pos + 1)) ++n;
    return n;
}

void check_placeholders(const std::string& tmpl, const char* which,
                        const std::vector<std::string>& required) {
    for (const std::string& ph : required)
        if (count_occurrences(tmpl, ph) != 1)
            throw ConfigError(std::string(which) + " template must contain " + ph +
                              " exactly once: " + tmpl);
    // No placeholders beyond the required set.
    for (size_t pos = tmpl.find('{'); pos != std::string::npos; pos = tmpl.find('{', pos + 1)) {
        const size_t end = tmpl.find('}', pos);
        if (end == std::string::npos)
            throw ConfigError(std::string(which) + " template has an unterminated placeholder: " + tmpl);
        const std::string ph = tmpl.substr(pos, end - pos + 1);
        if (std::find(required.begin(), required.end(), ph) == required.end())
            throw ConfigError(std::string(which) + " template has unknown placeholder " + ph);
        pos = end;
    }
}

}  // namespace

void validate(const CodecSpec& spec) {
    if (spec.name.empty()) throw ConfigError("codec name must not be empty");
    if (spec.qp_min > spec.qp_max) throw ConfigError("codec qp_min exceeds qp_max");
    if (spec.is_builtin()) {
        if (!spec.encode_template.empty() || !spec.decode_template.empty())
            throw ConfigError("builtin codec takes no command templates");
        if (spec.qp_min < 0 || spec.qp_max > 9)
            throw ConfigError("builtin codec qp range is 0..9");
        return;
    }
    check_placeholders(spec.encode_template, "encode", {"{input}", "{output}", "{qp}"});
    check_placeholders(spec.decode_template, "decode", {"{input}", "{output}"});
}

// ---------------------------------------------------------------------------
// Built-in degrader: 8x8 block DCT, uniform quantizer, Exp-Golomb bitstream.

double builtin_step_size(int qp) {
    if (qp < 0 || qp > 9) throw CodecError("builtin qp out of range 0..9: " + std::to_string(qp));
    double step = 1.0;
    for (int i = 0; i < qp; ++i) step *= 1.7;
    return step;
}

namespace {

constexpr char kBitstreamMagic[4] = {'A', 'C', 'Z', '1'};

struct BitWriter {
    std::vector<uint8_t> bytes;
    uint32_t acc = 0;
    int nbits = 0;

    void put_bit(uint32_t b) {
        acc = (acc << 1) | (b & 1u);
        if (++nbits == 8) {
            bytes.push_back(uint8_t(acc));
            acc = 0;
            nbits = 0;
        }
    }
    void put_bits(uint64_t v, int n) {
        for (int i = n - 1; i >= 0; --i) put_bit(uint32_t(v >> i));
    }
    void finish() {
        while (nbits != 0) put_bit(0);
    }
};

void put_eg(BitWriter& bw, uint64_t v) {
    const uint64_t n = v + 1;
    const int b = std::bit_width(n);
    for (int i = 0; i < b - 1; ++i) bw.put_bit(0);
    bw.put_bits(n, b);
}

void put_eg_signed(BitWriter& bw, int64_t s) {
    put_eg(bw, s > 0 ? uint64_t(2 * s - 1) : uint64_t(-2 * s));
}

struct BitReader {
    const std::vector<uint8_t>& bytes;
    size_t pos;  // next byte
    int bit = 0; // bits consumed of bytes[pos]

    explicit BitReader(const std::vector<uint8_t>& b, size_t start) : bytes(b), pos(start) {}

    uint32_t get_bit() {
        if (pos >= bytes.size()) throw CodecError("truncated builtin bitstream");
        const uint32_t v = (bytes[pos] >> (7 - bit)) & 1u;
        if (++bit == 8) {
            bit = 0;
            ++pos;
        }
        return v;
    }
    uint64_t get_eg() {
        int zeros = 0;
        while (get_bit() == 0)
            if (++zeros > 62) throw CodecError("corrupt builtin bitstream (bad code length)");
        uint64_t n = 1;
        for (int i = 0; i < zeros; ++i) n = (n << 1) | get_bit();
        return n - 1;
    }
    int64_t get_eg_signed() {
        const uint64_t v = get_eg();
        return (v & 1) ? int64_t((v + 1) / 2) : -int64_t(v / 2);
    }
};

// Orthonormal 8x8 DCT-II basis.
const std::array<std::array<double, 8>, 8>& dct_basis() {
    static const auto basis = [] {
        std::array<std::array<double, 8>, 8> c{};
        for (int k = 0; k < 8; ++k) {
            const double s = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int n = 0; n < 8; ++n)
                c[size_t(k)][size_t(n)] = s * std::cos((2 * n + 1) * k * M_PI / 16.0);
        }
        return c;
    }();
    return basis;
}

const std::array<int, 64>& zigzag_order() {
    static const auto zz = [] {
        std::array<int, 64> order{};
        int idx = 0;
        for (int s = 0; s <= 14; ++s) {
            if (s % 2 == 0) {
                for (int r = std::min(s, 7); r >= std::max(0, s - 7); --r)
                    order[size_t(idx++)] = r * 8 + (s - r);
            } else {
                for (int r = std::max(0, s - 7); r <= std::min(s, 7); ++r)
                    order[size_t(idx++)] = r * 8 + (s - r);
            }
        }
        return order;
    }();
    return zz;
}

void fdct8x8(const double in[64], double out[64]) {
    const auto& c = dct_basis();
    double tmp[64];
    for (int u = 0; u < 8; ++u)
        for (int col = 0; col < 8; ++col) {
            double acc = 0;
            for (int r = 0; r < 8; ++r) acc += c[size_t(u)][size_t(r)] * in[r * 8 + col];
            tmp[u * 8 + col] = acc;
        }
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double acc = 0;
            for (int col = 0; col < 8; ++col) acc += c[size_t(v)][size_t(col)] * tmp[u * 8 + col];
            out[u * 8 + v] = acc;
        }
}

void idct8x8(const double in[64], double out[64]) {
    const auto& c = dct_basis();
    double tmp[64];
    for (int r = 0; r < 8; ++r)
        for (int v = 0; v < 8; ++v) {
            double acc = 0;
            for (int u = 0; u < 8; ++u) acc += c[size_t(u)][size_t(r)] * in[u * 8 + v];
            tmp[r * 8 + v] = acc;
        }
    for (int r = 0; r < 8; ++r)
        for (int col = 0; col < 8; ++col) {
            double acc = 0;
            for (int v = 0; v < 8; ++v) acc += c[size_t(v)][size_t(col)] * tmp[r * 8 + v];
            out[r * 8 + col] = acc;
        }
}

template <typename T>
void append_le(std::vector<uint8_t>& bytes, T v) {
    for (size_t i = 0; i < sizeof(T); ++i) bytes.push_back(uint8_t(v >> (8 * i)));
}

template <typename T>
T read_le(const std::vector<uint8_t>& bytes, size_t off) {
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v = T(v | (T(bytes.at(off + i)) << (8 * i)));
    return v;
}

}  // namespace

std::vector<uint8_t> builtin_encode(const ImageBuffer& img, int qp) {
    const double step = builtin_step_size(qp);
    const int h = img.height, w = img.width;
    const int h8 = (h + 7) / 8 * 8, w8 = (w + 7) / 8 * 8;
    const auto& zz = zigzag_order();

    BitWriter bw;
    bw.bytes.assign(kBitstreamMagic, kBitstreamMagic + 4);
    append_le(bw.bytes, uint32_t(h));
    append_le(bw.bytes, uint32_t(w));
    bw.bytes.push_back(uint8_t(qp));

    std::vector<double> plane(size_t(h8) * w8);
    for (int ch = 0; ch < 3; ++ch) {
        for (int r = 0; r < h8; ++r)
            for (int c = 0; c < w8; ++c)
                plane[size_t(r) * w8 + c] =
                    double(img.at(std::min(r, h - 1), std::min(c, w - 1), ch)) * 255.0;

        int64_t prev_dc = 0;
        for (int br = 0; br < h8; br += 8)
            for (int bc = 0; bc < w8; bc += 8) {
                double blk[64], coef[64];
                for (int r = 0; r < 8; ++r)
                    for (int c = 0; c < 8; ++c)
                        blk[r * 8 + c] = plane[size_t(br + r) * w8 + (bc + c)];
                fdct8x8(blk, coef);
                int64_t q[64];
                for (int i = 0; i < 64; ++i) q[i] = std::llround(coef[i] / step);

                int64_t zcoef[64];
                for (int i = 0; i < 64; ++i) zcoef[i] = q[zz[size_t(i)]];

                put_eg_signed(bw, zcoef[0] - prev_dc);
                prev_dc = zcoef[0];

                int pairs = 0;
                for (int i = 1; i < 64; ++i)
                    if (zcoef[i] != 0) ++pairs;
                put_eg(bw, uint64_t(pairs));
                int run = 0;
                for (int i = 1; i < 64; ++i) {
                    if (zcoef[i] == 0) {
                        ++run;
                        continue;
                    }
                    put_eg(bw, uint64_t(run));
                    put_eg_signed(bw, zcoef[i]);
                    run = 0;
                }
            }
    }
    bw.finish();
    return bw.bytes;
}

ImageBuffer builtin_decode(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 13 || std::memcmp(bytes.data(), kBitstreamMagic, 4) != 0)
        throw CodecError("not a builtin bitstream (bad magic)");
    const int h = int(read_le<uint32_t>(bytes, 4));
    const int w = int(read_le<uint32_t>(bytes, 8));
    const int qp = bytes[12];
    if (h < 1 || w < 1 || h > (1 << 20) || w > (1 << 20))
        throw CodecError("implausible builtin bitstream dimensions");
    const double step = builtin_step_size(qp);
    const int h8 = (h + 7) / 8 * 8, w8 = (w + 7) / 8 * 8;
    const auto& zz = zigzag_order();

    BitReader br_(bytes, 13);
    ImageBuffer img(h, w);
    std::vector<double> plane(size_t(h8) * w8);
    for (int ch = 0; ch < 3; ++ch) {
        int64_t prev_dc = 0;
        for (int br = 0; br < h8; br += 8)
            for (int bc = 0; bc < w8; bc += 8) {
                int64_t zcoef[64] = {};
                prev_dc += br_.get_eg_signed();
                zcoef[0] = prev_dc;
                const uint64_t pairs = br_.get_eg();
                if (pairs > 63) throw CodecError("corrupt builtin bitstream (pair count)");
                int i = 1;
                for (uint64_t p = 0; p < pairs; ++p) {
                    const uint64_t run = br_.get_eg();
                    const int64_t level = br_.get_eg_signed();
                    i += int(run);
                    if (i > 63 || level == 0)
                        throw CodecError("corrupt builtin bitstream (run overflow)");
                    zcoef[i++] = level;
                }

                double coef[64], blk[64];
                for (int t = 0; t < 64; ++t) coef[zz[size_t(t)]] = 0;
                for (int t = 0; t < 64; ++t) coef[zz[size_t(t)]] = double(zcoef[t]) * step;
                idct8x8(coef, blk);
                for (int r = 0; r < 8; ++r)
                    for (int c = 0; c < 8; ++c)
                        plane[size_t(br + r) * w8 + (bc + c)] = blk[r * 8 + c];
            }
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const double v = plane[size_t(r) * w8 + c] / 255.0;
                img.at(r, c, ch) = float(std::clamp(v, 0.0, 1.0));
            }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Child-process plumbing for external codecs.

namespace {

std::vector<std::string> split_whitespace(const std::string& s) {
    std::vector<std::string> parts;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(uint8_t(s[i]))) ++i;
        size_t j = i;
        while (j < s.size() && !std::isspace(uint8_t(s[j]))) ++j;
        if (j > i) parts.push_back(s.substr(i, j - i));
        i = j;
    }
    return parts;
}

std::string substitute(std::string tmpl, const std::string& ph, const std::string& value) {
    const size_t pos = tmpl.find(ph);
    if (pos != std::string::npos) tmpl.replace(pos, ph.size(), value);
    return tmpl;
}

std::string read_tail(const std::string& path, size_t max_bytes) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return "";
    std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (all.size() > max_bytes) return "..." + all.substr(all.size() - max_bytes);
    return all;
}

// Launch argv[0] with argv, stdout+stderr captured to transcript_path.
// Throws CodecError on non-zero exit, signal, or launch failure.
void run_command(const std::string& command, const std::string& transcript_path) {
    const std::vector<std::string> argv = split_whitespace(command);
    if (argv.empty()) throw CodecError("empty codec command");

    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const std::string& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);

    const pid_t pid = fork();
    if (pid < 0) throw CodecError("fork failed running: " + command);
    if (pid == 0) {
        const int fd = open(transcript_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd >= 0) {
            dup2(fd, 1);
            dup2(fd, 2);
            close(fd);
        }
        execvp(cargv[0], cargv.data());
        _exit(127);
    }
    int status = 0;
    if (waitpid(pid, &status, 0) < 0) throw CodecError("waitpid failed running: " + command);
    if (WIFSIGNALED(status))
        throw CodecError("codec command killed by signal " + std::to_string(WTERMSIG(status)) +
                         ": " + command + "\n" + read_tail(transcript_path, 2000));
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (code != 0)
        throw CodecError("codec command failed with status " + std::to_string(code) + ": " +
                         command + "\n" + read_tail(transcript_path, 2000));
}

std::string hash8(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%08x", uint32_t(h ^ (h >> 32)));
    return buf;
}

int64_t file_bits(const std::string& path, const std::string& what) {
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) throw CodecError(what + " missing after codec run: " + path);
    return int64_t(size) * 8;
}

}  // namespace

DegradedResult run_codec(const std::string& image_path, int qp, const CodecSpec& spec,
                         const std::string& workdir) {
    validate(spec);
    if (qp < spec.qp_min || qp > spec.qp_max)
        throw CodecError("qp " + std::to_string(qp) + " outside codec range " +
                         std::to_string(spec.qp_min) + ".." + std::to_string(spec.qp_max));
    fs::create_directories(workdir);
    const std::string stem = fs::path(image_path).stem().string() + "_" + hash8(image_path) +
                             "_q" + std::to_string(qp);

    if (spec.is_builtin()) {
        const ImageBuffer img = load_image(image_path);
        const std::vector<uint8_t> bytes = builtin_encode(img, qp);
        const std::string enc_path = (fs::path(workdir) / (stem + ".acz")).string();
        std::ofstream f(enc_path, std::ios::binary);
        f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        f.flush();
        if (!f) throw IoError("cannot write encoded stream: " + enc_path);
        return DegradedResult{builtin_decode(bytes), file_bits(enc_path, "encoded stream")};
    }

    const std::string enc_path = (fs::path(workdir) / (stem + ".bin")).string();
    const std::string dec_path = (fs::path(workdir) / (stem + ".dec.png")).string();
    std::string cmd = substitute(spec.encode_template, "{input}", image_path);
    cmd = substitute(cmd, "{output}", enc_path);
    cmd = substitute(cmd, "{qp}", std::to_string(qp));
    run_command(cmd, (fs::path(workdir) / (stem + ".enc.log")).string());
    const int64_t bits = file_bits(enc_path, "encoded stream");

    cmd = substitute(spec.decode_template, "{input}", enc_path);
    cmd = substitute(cmd, "{output}", dec_path);
    run_command(cmd, (fs::path(workdir) / (stem + ".dec.log")).string());
    std::error_code ec;
    if (!fs::exists(dec_path, ec)) throw CodecError("decoded image missing after codec run: " + dec_path);
    return DegradedResult{load_image(dec_path), bits};
}

// ---------------------------------------------------------------------------
// Degrader handles.

namespace {

class BuiltinDegrader : public Degrader {
public:
    DegradedResult degrade(const ImageBuffer& img, int qp) override {
        const std::vector<uint8_t> bytes = builtin_encode(img, qp);
        return DegradedResult{builtin_decode(bytes), int64_t(bytes.size()) * 8};
    }
};

class ExternalDegrader : public Degrader {
public:
    ExternalDegrader(CodecSpec spec, std::string workdir)
        : spec_(std::move(spec)), workdir_(std::move(workdir)) {}

    DegradedResult degrade(const ImageBuffer& img, int qp) override {
        const fs::path dir = fs::path(workdir_) / ("pair_" + std::to_string(counter_++));
        fs::create_directories(dir);
        const std::string in_path = (dir / "in.png").string();
        save_image(img, in_path);
        DegradedResult result = run_codec(in_path, qp, spec_, dir.string());
        std::error_code ec;
        fs::remove_all(dir, ec);
        return result;
    }

private:
    CodecSpec spec_;
    std::string workdir_;
    uint64_t counter_ = 0;
};

}  // namespace

std::unique_ptr<Degrader> make_degrader(const CodecSpec& spec, const std::string& workdir) {
    validate(spec);
    if (spec.is_builtin()) return std::make_unique<BuiltinDegrader>();
    return std::make_unique<ExternalDegrader>(spec, workdir);
}

double bits_per_pixel(int64_t bits, int64_t pixels) {
    if (pixels <= 0) throw Error("bits_per_pixel: pixel count must be positive");
    return double(bits) / double(pixels);
}

// ---------------------------------------------------------------------------
// Rate targeting.

RateTable measure_rate_table(const std::vector<std::string>& paths, const CodecSpec& spec,
                             int qp_lo, int qp_hi, const std::string& workdir) {
    validate(spec);
    if (paths.empty()) throw CodecError("rate measurement needs at least one image");
    if (qp_lo > qp_hi) throw CodecError("rate window is empty");
    RateTable table;
    for (const std::string& path : paths) {
        const ImageBuffer original = load_image(path);
        RateTable::Entry entry;
        entry.path = path;
        entry.pixels = original.pixel_count();
        for (int qp = qp_lo; qp <= qp_hi; ++qp) {
            const DegradedResult r = run_codec(path, qp, spec, workdir);
            if (r.decoded.height != original.height || r.decoded.width != original.width)
                throw CodecError("decoded size differs from original for " + path);
            entry.by_qp[qp] = RateTable::Obs{r.bits, psnr(original, r.decoded)};
        }
        table.entries.push_back(std::move(entry));
    }
    return table;
}

RatePlan plan_from_table(const RateTable& table, double target_bpp) {
    if (table.entries.empty()) throw CodecError("rate plan needs at least one image");
    if (!(target_bpp > 0)) throw CodecError("target bpp must be positive");

    // One shared window, bits non-increasing as qp grows.
    std::vector<int> qps;
    for (const auto& [qp, obs] : table.entries.front().by_qp) qps.push_back(qp);
    if (qps.empty()) throw CodecError("rate table has no measurements");
    int64_t total_pixels = 0;
    for (const auto& entry : table.entries) {
        if (entry.pixels <= 0) throw CodecError("rate table has empty image: " + entry.path);
        total_pixels += entry.pixels;
        std::vector<int> row_qps;
        for (const auto& [qp, obs] : entry.by_qp) row_qps.push_back(qp);
        if (row_qps != qps)
            throw CodecError("rate table window differs for " + entry.path);
        for (size_t i = 1; i < qps.size(); ++i) {
            const int64_t prev = entry.by_qp.at(qps[i - 1]).bits;
            const int64_t cur = entry.by_qp.at(qps[i]).bits;
            if (cur > prev)
                throw CodecError("bits not non-increasing in qp for " + entry.path + ": qp " +
                                 std::to_string(qps[i - 1]) + " -> " + std::to_string(prev) +
                                 " bits, qp " + std::to_string(qps[i]) + " -> " +
                                 std::to_string(cur) + " bits");
        }
    }

    // Smallest qp whose uniform assignment fits the target.
    int base_idx = -1;
    int64_t base_bits = 0;
    for (size_t i = 0; i < qps.size(); ++i) {
        int64_t bits = 0;
        for (const auto& entry : table.entries) bits += entry.by_qp.at(qps[i]).bits;
        if (bits_per_pixel(bits, total_pixels) <= target_bpp) {
            base_idx = int(i);
            base_bits = bits;
            break;
        }
    }
    if (base_idx < 0) {
        int64_t min_bits = 0;
        for (const auto& entry : table.entries) min_bits += entry.by_qp.at(qps.back()).bits;
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "target %.6f bpp unreachable; minimum achievable is %.6f bpp at qp %d",
                      target_bpp, bits_per_pixel(min_bits, total_pixels), qps.back());
        throw CodecError(buf);
    }

    const int base_qp = qps[size_t(base_idx)];
    std::vector<int> assigned(table.entries.size(), base_qp);
    int64_t total_bits = base_bits;

    if (base_idx > 0) {
        const int up_qp = qps[size_t(base_idx) - 1];
        struct Candidate {
            size_t idx;
            int64_t delta_bits;
            double score;
        };
        std::vector<Candidate> cands;
        for (size_t i = 0; i < table.entries.size(); ++i) {
            const auto& entry = table.entries[i];
            const int64_t delta = entry.by_qp.at(up_qp).bits - entry.by_qp.at(base_qp).bits;
            const double gain = entry.by_qp.at(up_qp).psnr - entry.by_qp.at(base_qp).psnr;
            const double score =
                delta == 0 ? std::numeric_limits<double>::infinity() : gain / double(delta);
            cands.push_back(Candidate{i, delta, score});
        }
        // Best quality return per extra bit first; ties keep input order.
        std::stable_sort(cands.begin(), cands.end(),
                         [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
        for (const Candidate& c : cands) {
            if (bits_per_pixel(total_bits + c.delta_bits, total_pixels) > target_bpp) continue;
            assigned[c.idx] = up_qp;
            total_bits += c.delta_bits;
        }
    }

    RatePlan plan;
    plan.target_bpp = target_bpp;
    plan.total_pixels = total_pixels;
    plan.total_bits = total_bits;
    plan.achieved_bpp = bits_per_pixel(total_bits, total_pixels);
    for (size_t i = 0; i < table.entries.size(); ++i) {
        const auto& entry = table.entries[i];
        plan.rows.push_back(RatePlan::Row{entry.path, assigned[i],
                                          entry.by_qp.at(assigned[i]).bits, entry.pixels});
    }
    return plan;
}

RatePlan rate_target_plan(const std::vector<std::string>& paths, const CodecSpec& spec,
                          double target_bpp, int qp_lo, int qp_hi, const std::string& workdir) {
    return plan_from_table(measure_rate_table(paths, spec, qp_lo, qp_hi, workdir), target_bpp);
}

void write_plan(const RatePlan& plan, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write plan: " + path);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "# target_bpp=%.6f achieved_bpp=%.6f total_bits=%lld total_pixels=%lld images=%zu\n",
                  plan.target_bpp, plan.achieved_bpp, (long long)plan.total_bits,
                  (long long)plan.total_pixels, plan.rows.size());
    f << buf << "path,qp,bits,bpp\n";
    for (const auto& row : plan.rows) {
        std::snprintf(buf, sizeof buf, "%s,%d,%lld,%.6f\n", row.path.c_str(), row.qp,
                      (long long)row.bits, bits_per_pixel(row.bits, row.pixels));
        f << buf;
    }
    f.flush();
    if (!f) throw IoError("short write: " + path);
}

}  // namespace acpp
