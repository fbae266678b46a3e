#include "lmadapt/ckpt.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lmadapt/rng.hpp"

namespace lmadapt {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'T', 'C', 'K', '1'};
constexpr size_t kAlign = 64;

size_t align_up(size_t x) { return (x + kAlign - 1) / kAlign * kAlign; }

bool name_ok(const std::string& name) {
    if (name.empty() || name == "__meta__") return false;
    for (unsigned char c : name)
        if (c < 0x20 || c > 0x7e) return false;
    return true;
}

bool tensor_finite(const Tensor& t) {
    if (t.dtype() == Dtype::F32) {
        const float* p = t.f32();
        for (int64_t i = 0; i < t.numel(); ++i)
            if (!std::isfinite(p[i])) return false;
    } else if (t.dtype() == Dtype::F64) {
        const double* p = t.f64();
        for (int64_t i = 0; i < t.numel(); ++i)
            if (!std::isfinite(p[i])) return false;
    }
    return true;
}

void put_u64le(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint64_t get_u64le(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

const Tensor& Checkpoint::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) data_error("checkpoint: no tensor named '" + name + "'");
    return it->second;
}

int64_t Checkpoint::total_params() const {
    int64_t n = 0;
    for (const auto& [name, t] : tensors) n += t.numel();
    return n;
}

void validate_checkpoint(const Checkpoint& ckpt) {
    for (const auto& [name, t] : ckpt.tensors) {
        if (!name_ok(name)) data_error("checkpoint: invalid tensor name '" + name + "'");
        (void)t;
    }
    // paired quantization entries must both resolve
    for (const auto& [name, t] : ckpt.tensors) {
        (void)t;
        auto expect_peer = [&](const std::string& suffix, const std::string& peer_suffix) {
            if (name.size() > suffix.size() && name.ends_with(suffix)) {
                std::string base = name.substr(0, name.size() - suffix.size());
                if (!ckpt.has(base + peer_suffix))
                    data_error("checkpoint: '" + name + "' has no matching '" + base + peer_suffix + "'");
            }
        };
        expect_peer(".qdata", ".scales");
        expect_peer(".scales", ".qdata");
    }
}

std::vector<uint8_t> serialize_checkpoint(const Checkpoint& ckpt, const WriteOptions& opts) {
    validate_checkpoint(ckpt);

    json header = json::object();
    size_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        if (!opts.allow_nonfinite && !tensor_finite(t))
            data_error("checkpoint: tensor '" + name +
                       "' contains non-finite values (pass allow_nonfinite to override)");
        json entry;
        entry["dtype"] = dtype_name(t.dtype());
        entry["shape"] = t.shape();
        entry["byte_offset"] = offset;
        entry["byte_len"] = t.byte_size();
        header[name] = std::move(entry);
        offset = align_up(offset + t.byte_size());
    }
    header["__meta__"] = ckpt.meta;

    std::string htext = header.dump();
    size_t prefix = 4 + 8;
    size_t padded = align_up(prefix + htext.size()) - prefix;
    htext.resize(padded, ' ');

    std::vector<uint8_t> out;
    size_t payload = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        (void)name;
        payload = align_up(payload + t.byte_size());
    }
    out.reserve(prefix + htext.size() + payload);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u64le(out, htext.size());
    out.insert(out.end(), htext.begin(), htext.end());

    size_t base = out.size();
    out.resize(base + payload, 0);
    size_t off = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        (void)name;
        std::memcpy(out.data() + base + off, t.raw(), t.byte_size());
        off = align_up(off + t.byte_size());
    }
    return out;
}

void write_checkpoint(const Checkpoint& ckpt, const std::string& path, const WriteOptions& opts) {
    std::vector<uint8_t> bytes = serialize_checkpoint(ckpt, opts);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) data_error("checkpoint: cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) data_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint parse_checkpoint(const uint8_t* data, size_t size) {
    if (size < 12) data_error("checkpoint: file too short for magic and header length");
    if (std::memcmp(data, kMagic, 4) != 0) data_error("checkpoint: bad magic (not a TCK1 file)");
    uint64_t hlen = get_u64le(data + 4);
    if (hlen > size - 12) data_error("checkpoint: header length exceeds file size");

    json header;
    try {
        header = json::parse(data + 12, data + 12 + hlen);
    } catch (const json::exception& e) {
        data_error(std::string("checkpoint: header is not valid JSON: ") + e.what());
    }
    if (!header.is_object()) data_error("checkpoint: header must be a JSON object");

    size_t base = 12 + hlen;
    size_t payload_size = size - base;

    Checkpoint ckpt;
    std::vector<std::pair<uint64_t, uint64_t>> extents;
    for (const auto& [name, entry] : header.items()) {
        if (name == "__meta__") {
            if (!entry.is_object()) data_error("checkpoint: __meta__ must be an object");
            for (const auto& [k, v] : entry.items()) {
                if (!v.is_string()) data_error("checkpoint: __meta__ values must be strings");
                ckpt.meta[k] = v.get<std::string>();
            }
            continue;
        }
        if (!name_ok(name)) data_error("checkpoint: invalid tensor name '" + name + "'");
        if (!entry.is_object()) data_error("checkpoint: entry for '" + name + "' must be an object");
        if (!entry.contains("dtype") || !entry.contains("shape") || !entry.contains("byte_offset") ||
            !entry.contains("byte_len"))
            data_error("checkpoint: entry for '" + name + "' is missing required keys");

        if (!entry["dtype"].is_string()) data_error("checkpoint: dtype of '" + name + "' must be a string");
        auto dt = dtype_from_name(entry["dtype"].get<std::string>());
        if (!dt) data_error("checkpoint: unknown dtype '" + entry["dtype"].get<std::string>() + "' for '" + name + "'");

        if (!entry["shape"].is_array()) data_error("checkpoint: shape of '" + name + "' must be an array");
        std::vector<int64_t> shape;
        for (const auto& d : entry["shape"]) {
            if (!d.is_number_integer()) data_error("checkpoint: shape of '" + name + "' must hold integers");
            int64_t v = d.get<int64_t>();
            if (v < 0) data_error("checkpoint: negative extent in shape of '" + name + "'");
            shape.push_back(v);
        }

        if (!entry["byte_offset"].is_number_unsigned() && !entry["byte_offset"].is_number_integer())
            data_error("checkpoint: byte_offset of '" + name + "' must be an integer");
        if (!entry["byte_len"].is_number_unsigned() && !entry["byte_len"].is_number_integer())
            data_error("checkpoint: byte_len of '" + name + "' must be an integer");
        int64_t soff = entry["byte_offset"].get<int64_t>();
        int64_t slen = entry["byte_len"].get<int64_t>();
        if (soff < 0 || slen < 0) data_error("checkpoint: negative extent for '" + name + "'");
        uint64_t off = static_cast<uint64_t>(soff), len = static_cast<uint64_t>(slen);

        Tensor t(*dt, shape);
        if (t.byte_size() != len)
            data_error("checkpoint: byte_len of '" + name + "' does not match shape " + shape_str(shape));
        if (off > payload_size || len > payload_size - off)
            data_error("checkpoint: payload of '" + name + "' is out of bounds");
        std::memcpy(t.raw(), data + base + off, len);
        extents.emplace_back(off, len);
        ckpt.tensors.emplace(name, std::move(t));
    }

    std::sort(extents.begin(), extents.end());
    for (size_t i = 1; i < extents.size(); ++i) {
        if (extents[i - 1].second > 0 && extents[i].first < extents[i - 1].first + extents[i - 1].second)
            data_error("checkpoint: overlapping tensor payloads");
    }
    return ckpt;
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) data_error("checkpoint: cannot open '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes.data(), bytes.size());
}

std::string checkpoint_digest(const Checkpoint& ckpt) {
    std::vector<uint8_t> bytes = serialize_checkpoint(ckpt, {.allow_nonfinite = true});
    uint64_t h = fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string inspect_checkpoint(const Checkpoint& ckpt) {
    std::ostringstream os;
    uint64_t total = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        os << name << "  " << dtype_name(t.dtype()) << "  " << shape_str(t.shape()) << "  "
           << t.byte_size() << " bytes\n";
        total += t.byte_size();
    }
    os << ckpt.tensors.size() << " tensors, " << total << " payload bytes\n";
    if (!ckpt.meta.empty()) {
        os << "meta:\n";
        for (const auto& [k, v] : ckpt.meta) os << "  " << k << " = " << v << "\n";
    }
    return os.str();
}

}  // namespace lmadapt
