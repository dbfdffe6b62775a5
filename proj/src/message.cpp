#include "commelec/message.hpp"

#include <bit>
#include <cstring>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "wire codec assumes a little-endian host");

namespace commelec {

namespace {

constexpr std::uint8_t kTagAdvertisement = 1;
constexpr std::uint8_t kTagRequest = 2;

struct Writer {
  std::vector<std::uint8_t> buf;
  void u8(std::uint8_t v) { buf.push_back(v); }
  void u32(std::uint32_t v) {
    const auto* b = reinterpret_cast<const std::uint8_t*>(&v);
    buf.insert(buf.end(), b, b + 4);
  }
  void i64(std::int64_t v) {
    const auto* b = reinterpret_cast<const std::uint8_t*>(&v);
    buf.insert(buf.end(), b, b + 8);
  }
  void f64(double v) {
    const auto* b = reinterpret_cast<const std::uint8_t*>(&v);
    buf.insert(buf.end(), b, b + 8);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf.insert(buf.end(), s.begin(), s.end());
  }
  void pq(const PQ& x) {
    f64(x.p);
    f64(x.q);
  }
  void box(const Box& b) {
    f64(b.p_lo);
    f64(b.p_hi);
    f64(b.q_lo);
    f64(b.q_hi);
  }
};

struct Reader {
  const std::uint8_t* p;
  const std::uint8_t* end;
  void need(size_t n) const {
    if (static_cast<size_t>(end - p) < n) throw DecodeError("truncated buffer");
  }
  std::uint8_t u8() {
    need(1);
    return *p++;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    p += 4;
    return v;
  }
  std::int64_t i64() {
    need(8);
    std::int64_t v;
    std::memcpy(&v, p, 8);
    p += 8;
    return v;
  }
  double f64() {
    need(8);
    double v;
    std::memcpy(&v, p, 8);
    p += 8;
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    if (n > (1u << 20)) throw DecodeError("string too long");
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    return s;
  }
  PQ pq() {
    double a = f64(), b = f64();
    return {a, b};
  }
  Box box() {
    Box b;
    b.p_lo = f64();
    b.p_hi = f64();
    b.q_lo = f64();
    b.q_hi = f64();
    return b;
  }
};

void write_profile(Writer& w, const PQProfile& prof) {
  w.u32(static_cast<std::uint32_t>(prof.constraints.size()));
  for (const auto& c : prof.constraints) {
    std::visit(
        [&](const auto& k) {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, Disc>) {
            w.u8(0);
            w.pq(k.center);
            w.f64(k.radius);
          } else if constexpr (std::is_same_v<T, HalfPlane>) {
            w.u8(1);
            w.f64(k.a);
            w.f64(k.b);
            w.f64(k.c);
          } else if constexpr (std::is_same_v<T, Cone>) {
            w.u8(2);
            w.f64(k.cos_min);
            w.u8(k.sign >= 0 ? 1 : 0);
          } else if constexpr (std::is_same_v<T, Interval>) {
            w.u8(3);
            w.f64(k.p_lo);
            w.f64(k.p_hi);
            w.f64(k.q_lo);
            w.f64(k.q_hi);
          } else if constexpr (std::is_same_v<T, Point>) {
            w.u8(4);
            w.pq(k.x);
          } else {
            w.u8(5);
            w.u32(static_cast<std::uint32_t>(k.verts.size()));
            for (const auto& v : k.verts) w.pq(v);
          }
        },
        c);
  }
}

PQProfile read_profile(Reader& r) {
  PQProfile prof;
  std::uint32_t n = r.u32();
  if (n > 4096) throw DecodeError("too many constraints");
  for (std::uint32_t i = 0; i < n; ++i) {
    switch (r.u8()) {
      case 0: {
        PQ c = r.pq();
        prof.constraints.push_back(Disc{c, r.f64()});
        break;
      }
      case 1: {
        double a = r.f64(), b = r.f64(), cc = r.f64();
        prof.constraints.push_back(HalfPlane{a, b, cc});
        break;
      }
      case 2: {
        double cm = r.f64();
        prof.constraints.push_back(Cone{cm, r.u8() ? +1 : -1});
        break;
      }
      case 3: {
        double a = r.f64(), b = r.f64(), c = r.f64(), d = r.f64();
        prof.constraints.push_back(Interval{a, b, c, d});
        break;
      }
      case 4:
        prof.constraints.push_back(Point{r.pq()});
        break;
      case 5: {
        std::uint32_t m = r.u32();
        if (m > 65536) throw DecodeError("polygon too large");
        Polygon poly;
        poly.verts.reserve(m);
        for (std::uint32_t j = 0; j < m; ++j) poly.verts.push_back(r.pq());
        prof.constraints.push_back(std::move(poly));
        break;
      }
      default:
        throw DecodeError("unknown constraint tag");
    }
  }
  return prof;
}

void write_belief(Writer& w, const BeliefDescriptor& bf) {
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, BeliefIdeal>) {
          w.u8(0);
        } else if constexpr (std::is_same_v<T, BeliefPvDrop>) {
          w.u8(1);
          w.f64(b.dp_max);
          w.f64(b.cos_min);
        } else if constexpr (std::is_same_v<T, BeliefWbSet>) {
          w.u8(2);
          w.f64(b.p_full);
          w.u8((b.include_request ? 1 : 0) | (b.include_zero ? 2 : 0) |
               (b.include_full ? 4 : 0));
        } else if constexpr (std::is_same_v<T, BeliefUlArea>) {
          w.u8(3);
          w.f64(b.rho_max);
        } else if constexpr (std::is_same_v<T, BeliefSgBand>) {
          w.u8(4);
          write_profile(w, b.cap_small);
          w.u32(static_cast<std::uint32_t>(b.cap_sweep.size()));
          for (const auto& c : b.cap_sweep) write_profile(w, c);
        } else {
          w.u8(5);
          w.u32(static_cast<std::uint32_t>(b.reps.size()));
          for (size_t i = 0; i < b.reps.size(); ++i) {
            w.pq(b.reps[i]);
            w.box(b.rects[i]);
          }
        }
      },
      bf);
}

BeliefDescriptor read_belief(Reader& r) {
  switch (r.u8()) {
    case 0:
      return BeliefIdeal{};
    case 1: {
      double dp = r.f64();
      return BeliefPvDrop{dp, r.f64()};
    }
    case 2: {
      BeliefWbSet b;
      b.p_full = r.f64();
      std::uint8_t f = r.u8();
      b.include_request = f & 1;
      b.include_zero = f & 2;
      b.include_full = f & 4;
      return b;
    }
    case 3:
      return BeliefUlArea{r.f64()};
    case 4: {
      BeliefSgBand b;
      b.cap_small = read_profile(r);
      std::uint32_t n = r.u32();
      if (n > 1024) throw DecodeError("sweep too large");
      for (std::uint32_t i = 0; i < n; ++i) b.cap_sweep.push_back(read_profile(r));
      return b;
    }
    case 5: {
      BeliefAggRect b;
      std::uint32_t n = r.u32();
      if (n > 65536) throw DecodeError("grid too large");
      for (std::uint32_t i = 0; i < n; ++i) {
        b.reps.push_back(r.pq());
        b.rects.push_back(r.box());
      }
      return b;
    }
    default:
      throw DecodeError("unknown belief tag");
  }
}

void write_cost(Writer& w, const CostDescriptor& c) {
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, CostPolySoc>) {
          w.u8(0);
          w.f64(k.k);
          w.f64(k.a);
          w.f64(k.b);
          w.f64(k.c);
          w.f64(k.dsoc);
          w.f64(k.center);
          w.f64(k.scale);
        } else if constexpr (std::is_same_v<T, CostLinearPQuadQ>) {
          w.u8(1);
          w.f64(k.a);
          w.f64(k.b);
        } else if constexpr (std::is_same_v<T, CostEfficiency>) {
          w.u8(2);
          w.f64(k.a);
          w.u32(static_cast<std::uint32_t>(k.p_samples.size()));
          for (size_t i = 0; i < k.p_samples.size(); ++i) {
            w.f64(k.p_samples[i]);
            w.f64(k.eta[i]);
          }
        } else if constexpr (std::is_same_v<T, CostConstant>) {
          w.u8(3);
          w.f64(k.value);
        } else {
          w.u8(4);
          w.u32(static_cast<std::uint32_t>(k.pts.size()));
          for (size_t i = 0; i < k.pts.size(); ++i) {
            w.pq(k.pts[i]);
            w.f64(k.vals[i]);
          }
          w.u32(static_cast<std::uint32_t>(k.tris.size()));
          for (const auto& t : k.tris) {
            w.u32(t[0]);
            w.u32(t[1]);
            w.u32(t[2]);
          }
        }
      },
      c);
}

CostDescriptor read_cost(Reader& r) {
  switch (r.u8()) {
    case 0: {
      CostPolySoc c;
      c.k = r.f64();
      c.a = r.f64();
      c.b = r.f64();
      c.c = r.f64();
      c.dsoc = r.f64();
      c.center = r.f64();
      c.scale = r.f64();
      return c;
    }
    case 1: {
      double a = r.f64();
      return CostLinearPQuadQ{a, r.f64()};
    }
    case 2: {
      CostEfficiency c;
      c.a = r.f64();
      std::uint32_t n = r.u32();
      if (n > 4096) throw DecodeError("table too large");
      for (std::uint32_t i = 0; i < n; ++i) {
        c.p_samples.push_back(r.f64());
        c.eta.push_back(r.f64());
      }
      return c;
    }
    case 3:
      return CostConstant{r.f64()};
    case 4: {
      CostInterpGrid c;
      std::uint32_t n = r.u32();
      if (n > 65536) throw DecodeError("grid too large");
      for (std::uint32_t i = 0; i < n; ++i) {
        c.pts.push_back(r.pq());
        c.vals.push_back(r.f64());
      }
      std::uint32_t t = r.u32();
      if (t > 131072) throw DecodeError("triangulation too large");
      for (std::uint32_t i = 0; i < t; ++i) {
        int a = static_cast<int>(r.u32());
        int b = static_cast<int>(r.u32());
        int cc = static_cast<int>(r.u32());
        if (a < 0 || b < 0 || cc < 0 || a >= static_cast<int>(n) ||
            b >= static_cast<int>(n) || cc >= static_cast<int>(n))
          throw DecodeError("triangle index out of range");
        c.tris.push_back({a, b, cc});
      }
      return c;
    }
    default:
      throw DecodeError("unknown cost tag");
  }
}

}  // namespace

std::vector<std::uint8_t> encode_advertisement(const Advertisement& ad) {
  Writer w;
  w.u8(kTagAdvertisement);
  w.str(ad.agent_id);
  w.i64(ad.timestamp_us);
  write_profile(w, ad.profile);
  write_belief(w, ad.belief);
  write_cost(w, ad.cost);
  return std::move(w.buf);
}

Advertisement decode_advertisement(const std::vector<std::uint8_t>& buf) {
  Reader r{buf.data(), buf.data() + buf.size()};
  if (r.u8() != kTagAdvertisement) throw DecodeError("not an advertisement");
  Advertisement ad;
  ad.agent_id = r.str();
  ad.timestamp_us = r.i64();
  ad.profile = read_profile(r);
  ad.belief = read_belief(r);
  ad.cost = read_cost(r);
  if (r.p != r.end) throw DecodeError("trailing bytes");
  return ad;
}

std::vector<std::uint8_t> encode_request(const Request& rq) {
  Writer w;
  w.u8(kTagRequest);
  w.str(rq.agent_id);
  w.i64(rq.timestamp_us);
  w.pq(rq.setpoint);
  return std::move(w.buf);
}

Request decode_request(const std::vector<std::uint8_t>& buf) {
  Reader r{buf.data(), buf.data() + buf.size()};
  if (r.u8() != kTagRequest) throw DecodeError("not a request");
  Request rq;
  rq.agent_id = r.str();
  rq.timestamp_us = r.i64();
  rq.setpoint = r.pq();
  if (r.p != r.end) throw DecodeError("trailing bytes");
  return rq;
}

namespace {

nlohmann::json profile_json(const PQProfile& prof) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : prof.constraints) {
    std::visit(
        [&](const auto& k) {
          using T = std::decay_t<decltype(k)>;
          nlohmann::json j;
          if constexpr (std::is_same_v<T, Disc>) {
            j = {{"kind", "disc"},
                 {"center", {k.center.p, k.center.q}},
                 {"radius", k.radius}};
          } else if constexpr (std::is_same_v<T, HalfPlane>) {
            j = {{"kind", "halfplane"}, {"a", k.a}, {"b", k.b}, {"c", k.c}};
          } else if constexpr (std::is_same_v<T, Cone>) {
            j = {{"kind", "cone"}, {"cos_min", k.cos_min}, {"sign", k.sign}};
          } else if constexpr (std::is_same_v<T, Interval>) {
            j = {{"kind", "interval"},
                 {"p", {k.p_lo, k.p_hi}},
                 {"q", {k.q_lo, k.q_hi}}};
          } else if constexpr (std::is_same_v<T, Point>) {
            j = {{"kind", "point"}, {"x", {k.x.p, k.x.q}}};
          } else {
            nlohmann::json vs = nlohmann::json::array();
            for (const auto& v : k.verts) vs.push_back({v.p, v.q});
            j = {{"kind", "polygon"}, {"verts", vs}};
          }
          arr.push_back(j);
        },
        c);
  }
  return arr;
}

}  // namespace

std::string advertisement_to_json(const Advertisement& ad) {
  nlohmann::json j;
  j["agent_id"] = ad.agent_id;
  j["timestamp_us"] = ad.timestamp_us;
  j["profile"] = profile_json(ad.profile);
  j["belief_kind"] = static_cast<int>(ad.belief.index());
  j["cost_kind"] = static_cast<int>(ad.cost.index());
  return j.dump();
}

std::string request_to_json(const Request& rq) {
  nlohmann::json j;
  j["agent_id"] = rq.agent_id;
  j["timestamp_us"] = rq.timestamp_us;
  j["p_kw"] = rq.setpoint.p;
  j["q_kvar"] = rq.setpoint.q;
  return j.dump();
}

bool operator==(const Request& a, const Request& b) {
  return a.agent_id == b.agent_id && a.timestamp_us == b.timestamp_us &&
         a.setpoint.p == b.setpoint.p && a.setpoint.q == b.setpoint.q;
}

bool operator==(const Advertisement& a, const Advertisement& b) {
  return encode_advertisement(a) == encode_advertisement(b);
}

}  // namespace commelec
