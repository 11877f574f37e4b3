#include "flivt/weight_file.hpp"
#include "flivt/rng.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace flivt {

namespace {

constexpr size_t kMaxNameLen = 4096;
constexpr int kMaxRank = 8;
constexpr double kMetaSchema = 1.0;
constexpr size_t kMetaLen = 32;
const std::string kMetaName = "meta.config";

// --- little-endian writer with a running FNV-1a hash -----------------------

struct Writer {
    std::vector<uint8_t> bytes;
    uint64_t hash = kFnvOffset;

    void put(const void* data, size_t len) {
        const auto* p = static_cast<const uint8_t*>(data);
        bytes.insert(bytes.end(), p, p + len);
        hash = fnv1a64(p, len, hash);
    }
    void u8(uint8_t v) { put(&v, 1); }
    void u32(uint32_t v) {
        uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                        static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
        put(b, 4);
    }
    void u64_raw(uint64_t v) { // not hashed; used only for the trailing checksum
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
    void f64(double v) {
        const uint64_t u = std::bit_cast<uint64_t>(v);
        u32(static_cast<uint32_t>(u));
        u32(static_cast<uint32_t>(u >> 32));
    }
};

struct Reader {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;
    uint64_t hash = kFnvOffset;

    void take(void* out, size_t len) {
        if (pos + len > bytes.size()) throw io_error("weight file truncated");
        std::memcpy(out, bytes.data() + pos, len);
        hash = fnv1a64(bytes.data() + pos, len, hash);
        pos += len;
    }
    uint8_t u8() {
        uint8_t v;
        take(&v, 1);
        return v;
    }
    uint32_t u32() {
        uint8_t b[4];
        take(b, 4);
        return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
               static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
    }
    uint64_t u64_raw() {
        if (pos + 8 > bytes.size()) throw io_error("weight file truncated");
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() {
        const uint64_t lo = u32();
        const uint64_t hi = u32();
        return std::bit_cast<double>(lo | hi << 32);
    }
};

void write_tensor(Writer& w, const std::string& name, const Tensor& t) {
    if (name.size() > kMaxNameLen) throw io_error("tensor name too long: " + name);
    w.u32(static_cast<uint32_t>(name.size()));
    w.put(name.data(), name.size());
    w.u8(t.dtype() == Dtype::F32 ? 0 : 1);
    w.u8(static_cast<uint8_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) w.u32(static_cast<uint32_t>(t.dim(i)));
    if (t.dtype() == Dtype::F32)
        for (float v : t.data<float>()) w.f32(v);
    else
        for (double v : t.data<double>()) w.f64(v);
}

std::pair<std::string, Tensor> read_tensor(Reader& r) {
    const uint32_t name_len = r.u32();
    if (name_len > kMaxNameLen) throw io_error("tensor name length out of range");
    std::string name(name_len, '\0');
    r.take(name.data(), name_len);
    const uint8_t dtype_byte = r.u8();
    if (dtype_byte > 1) throw io_error("unknown dtype byte in " + name);
    const Dtype dt = dtype_byte == 0 ? Dtype::F32 : Dtype::F64;
    const uint8_t rank = r.u8();
    if (rank > kMaxRank) throw io_error("tensor rank out of range in " + name);
    std::vector<int64_t> dims(rank);
    int64_t numel = 1;
    for (auto& d : dims) {
        d = r.u32();
        numel *= d;
        if (numel > (int64_t(1) << 34)) throw io_error("tensor too large in " + name);
    }
    Tensor t(dt, dims);
    if (dt == Dtype::F32)
        for (auto& v : t.data<float>()) v = r.f32();
    else
        for (auto& v : t.data<double>()) v = r.f64();
    return {std::move(name), std::move(t)};
}

std::vector<double> encode_config(const ModelGraph& g) {
    const VariantConfig& c = g.config;
    std::vector<double> m(kMetaLen, 0.0);
    m[0] = kMetaSchema;
    m[1] = static_cast<double>(c.name);
    m[2] = c.stem_channels[0];
    m[3] = c.stem_channels[1];
    for (int i = 0; i < 4; ++i) {
        m[4 + i] = c.stage_channels[static_cast<size_t>(i)];
        m[8 + i] = c.stage_depths[static_cast<size_t>(i)];
        m[12 + i] = c.stage_kinds[static_cast<size_t>(i)] == StageKind::RL ? 1 : 0;
        m[18 + i] = c.stage_resolutions[static_cast<size_t>(i)];
    }
    m[16] = c.ffn_ratio;
    m[17] = c.n_head;
    m[22] = c.head_expand;
    m[23] = c.embed_dim;
    m[24] = c.mhla_kind == MhlaKind::V1 ? 1 : 0;
    m[25] = c.norm_kind == LiteNorm::LayerNorm ? 1 : 0;
    m[26] = c.lite_activation == LiteAct::Gelu ? 1 : 0;
    m[27] = c.mhla_v1_ratio;
    m[28] = g.form == Form::Deploy ? 1 : 0;
    m[29] = g.dtype == Dtype::F64 ? 1 : 0;
    m[30] = static_cast<double>(static_cast<uint32_t>(g.seed));
    m[31] = static_cast<double>(static_cast<uint32_t>(g.seed >> 32));
    return m;
}

ModelGraph decode_config(const Tensor& meta) {
    if (meta.dtype() != Dtype::F64 || meta.numel() != static_cast<int64_t>(kMetaLen))
        throw io_error("malformed meta.config tensor");
    auto m = meta.data<double>();
    if (m[0] != kMetaSchema) throw io_error("unsupported meta.config schema");

    VariantConfig c;
    const int v = static_cast<int>(m[1]);
    if (v < 0 || v > static_cast<int>(Variant::Custom)) throw io_error("bad variant id");
    c.name = static_cast<Variant>(v);
    c.stem_channels = {static_cast<int>(m[2]), static_cast<int>(m[3])};
    for (int i = 0; i < 4; ++i) {
        c.stage_channels[static_cast<size_t>(i)] = static_cast<int>(m[4 + i]);
        c.stage_depths[static_cast<size_t>(i)] = static_cast<int>(m[8 + i]);
        c.stage_kinds[static_cast<size_t>(i)] = m[12 + i] != 0 ? StageKind::RL : StageKind::R;
        c.stage_resolutions[static_cast<size_t>(i)] = static_cast<int>(m[18 + i]);
    }
    c.ffn_ratio = static_cast<int>(m[16]);
    c.n_head = static_cast<int>(m[17]);
    c.head_expand = static_cast<int>(m[22]);
    c.embed_dim = static_cast<int>(m[23]);
    c.mhla_kind = m[24] != 0 ? MhlaKind::V1 : MhlaKind::Lite;
    c.norm_kind = m[25] != 0 ? LiteNorm::LayerNorm : LiteNorm::Affine;
    c.lite_activation = m[26] != 0 ? LiteAct::Gelu : LiteAct::None;
    c.mhla_v1_ratio = m[27];

    const Form form = m[28] != 0 ? Form::Deploy : Form::Train;
    const Dtype dt = m[29] != 0 ? Dtype::F64 : Dtype::F32;
    const uint64_t seed = static_cast<uint64_t>(m[30]) |
                          static_cast<uint64_t>(m[31]) << 32;
    try {
        return skeleton(c, seed, dt, form);
    } catch (const std::invalid_argument& e) {
        throw io_error(std::string("meta.config describes an invalid model: ") + e.what());
    }
}

} // namespace

std::vector<uint8_t> save_bytes(const ModelGraph& g) {
    std::map<std::string, const Tensor*> tensors;
    visit_tensors(g, [&](const std::string& name, const Tensor& t) { tensors[name] = &t; });
    const Tensor meta = Tensor::from_data({static_cast<int64_t>(kMetaLen)}, encode_config(g));
    tensors[kMetaName] = &meta;

    Writer w;
    w.put(kWeightMagic, 4);
    w.u32(kWeightVersion);
    w.u32(static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) write_tensor(w, name, *t);
    w.u64_raw(w.hash);
    return std::move(w.bytes);
}

ModelGraph load_bytes(const std::vector<uint8_t>& bytes) {
    Reader r{bytes};
    char magic[4];
    r.take(magic, 4);
    if (std::memcmp(magic, kWeightMagic, 4) != 0) throw io_error("not a weight file (bad magic)");
    if (r.u32() != kWeightVersion) throw io_error("unsupported weight file version");
    const uint32_t count = r.u32();

    std::map<std::string, Tensor> tensors;
    for (uint32_t i = 0; i < count; ++i) {
        auto [name, t] = read_tensor(r);
        if (!tensors.emplace(std::move(name), std::move(t)).second)
            throw io_error("duplicate tensor in weight file");
    }
    const uint64_t expected = r.hash;
    if (r.u64_raw() != expected) throw io_error("weight file checksum mismatch");
    if (r.pos != bytes.size()) throw io_error("trailing bytes after checksum");

    const auto meta = tensors.find(kMetaName);
    if (meta == tensors.end()) throw io_error("weight file has no meta.config");
    ModelGraph g = decode_config(meta->second);
    tensors.erase(meta);

    visit_tensors(g, [&](const std::string& name, Tensor& t) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw io_error("weight file is missing tensor " + name);
        if (it->second.dtype() != t.dtype() || it->second.shape() != t.shape())
            throw io_error("tensor " + name + " has unexpected dtype/shape");
        t = std::move(it->second);
        tensors.erase(it);
    });
    if (!tensors.empty())
        throw io_error("weight file has unexpected tensor " + tensors.begin()->first);
    return g;
}

void save_weights(const ModelGraph& g, const std::string& path) {
    const std::vector<uint8_t> bytes = save_bytes(g);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw io_error("write failed: " + path);
}

ModelGraph load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw io_error("cannot open " + path);
    const std::streamsize size = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> bytes(static_cast<size_t>(size));
    f.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!f) throw io_error("read failed: " + path);
    return load_bytes(bytes);
}

} // namespace flivt
