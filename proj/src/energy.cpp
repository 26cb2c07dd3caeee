#include "snnwb/energy.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "snnwb/agd.hpp"
#include "snnwb/errors.hpp"

namespace snnwb {

using nlohmann::json;

void EnergyConstants::validate() const {
    if (!(e_mult > 0.0 && e_add > 0.0 && e_mac > 0.0 && e_ac > 0.0))
        throw ConfigError("energy constants must be positive");
    if (std::fabs(e_mac - (e_mult + e_add)) > 1e-9)
        throw ConfigError("inconsistent energy table: e_mac must equal e_mult + e_add");
}

int64_t flops_ann_conv(int out_size, int in_ch, int k, int out_ch) {
    return static_cast<int64_t>(out_size) * out_size * in_ch * k * k * out_ch;
}

int64_t flops_ann_fc(int in, int out) { return static_cast<int64_t>(in) * out; }

double flops_snn(int64_t flops_ann, double s_a) {
    if (!(s_a >= 0.0 && s_a <= 1.0))
        throw InputError("spiking activity must lie in [0,1], got " + std::to_string(s_a));
    return static_cast<double>(flops_ann) * s_a;
}

EnergyReport total_energy(const std::vector<LayerProfile>& layers, int T, const EnergyConstants& constants) {
    constants.validate();
    if (T < 1) throw InputError("energy accounting needs T >= 1");
    EnergyReport rep;
    rep.T = T;
    double e_ann = 0.0, e_snn = 0.0;
    double e_ann_conv = 0.0, e_snn_conv = 0.0;
    for (const auto& lp : layers) {
        LayerEnergy le;
        le.name = lp.name;
        le.is_conv = lp.is_conv;
        le.flops_ann = lp.flops;
        le.spiking = lp.spiking;
        le.s_a = lp.spiking ? lp.s_a : 1.0;
        le.s_a_peak = lp.s_a_peak;
        le.e_ann = static_cast<double>(lp.flops) * constants.e_mac;
        if (lp.spiking) {
            le.flops_snn = flops_snn(lp.flops, lp.s_a);
            le.e_snn = le.flops_snn * constants.e_ac * T;
        } else {
            // Analog layers inside a spiking net run once, not per step.
            le.flops_snn = static_cast<double>(lp.flops);
            le.e_snn = le.e_ann;
        }
        e_ann += le.e_ann;
        e_snn += le.e_snn;
        if (lp.is_conv) {
            e_ann_conv += le.e_ann;
            e_snn_conv += le.e_snn;
        }
        rep.layers.push_back(std::move(le));
    }
    rep.e_ann_total = e_ann;
    rep.e_snn_total = e_snn;
    if (e_snn <= 0.0) throw InputError("spiking-side energy is zero; nothing to compare");
    rep.ee = e_ann / e_snn;
    rep.ee_full = rep.ee;
    rep.ee_conv = e_snn_conv > 0.0 ? e_ann_conv / e_snn_conv : 0.0;
    return rep;
}

std::vector<LayerProfile> profile_network(const Network& net, const std::vector<double>& input_activity,
                                          bool force_spiking, const std::vector<double>* peaks) {
    if (input_activity.size() != net.plan.size())
        throw ConfigError("activity vector arity does not match the execution plan");
    std::vector<LayerProfile> out;
    for (size_t pos = 0; pos < net.plan.size(); ++pos) {
        const auto& inv = net.plan[pos];
        const auto& l = net.layer(inv.layer);
        if (!l.weighted()) continue;  // pooling contributes no multiply-accumulates
        LayerProfile lp;
        lp.name = invocation_name(net, pos);
        lp.is_conv = l.kind == LayerKind::Conv;
        lp.flops = l.kind == LayerKind::Conv
                       ? flops_ann_conv(inv.out_shape[1], l.conv.in_ch, l.conv.k, l.conv.out_ch)
                       : flops_ann_fc(l.fc.in, l.fc.out);
        const bool spiking = !inv.is_head && (inv.spiking || (force_spiking && l.neuron == NeuronKind::ReLU));
        lp.spiking = spiking;
        lp.s_a = spiking ? input_activity[pos] : 1.0;
        if (peaks && spiking) lp.s_a_peak = (*peaks)[pos];
        out.push_back(std::move(lp));
    }
    return out;
}

std::vector<LayerProfile> profile_network_ann(const Network& net) {
    std::vector<double> ones(net.plan.size(), 1.0);
    auto prof = profile_network(net, ones, false);
    for (auto& lp : prof) lp.spiking = false;
    return prof;
}

std::string EnergyReport::to_json() const {
    json doc;
    doc["timesteps"] = T;
    doc["e_ann_pj"] = e_ann_total;
    doc["e_snn_pj"] = e_snn_total;
    doc["ee"] = ee;
    doc["ee_conv"] = ee_conv;
    doc["ee_full"] = ee_full;
    doc["layers"] = json::array();
    for (const auto& l : layers) {
        doc["layers"].push_back({{"name", l.name},
                                 {"kind", l.is_conv ? "conv" : "fc"},
                                 {"flops_ann", l.flops_ann},
                                 {"flops_snn_per_step", l.flops_snn},
                                 {"s_a", l.s_a},
                                 {"s_a_peak", l.s_a_peak},
                                 {"spiking", l.spiking},
                                 {"e_ann_pj", l.e_ann},
                                 {"e_snn_pj", l.e_snn}});
    }
    return doc.dump(2);
}

std::string EnergyReport::to_table() const {
    std::ostringstream os;
    os << "layer              kind  spiking      flops        S_A       E_ann(pJ)       E_snn(pJ)\n";
    char line[160];
    for (const auto& l : layers) {
        std::snprintf(line, sizeof line, "%-18s %-5s %-7s %10lld %10.4f %15.1f %15.1f\n", l.name.c_str(),
                      l.is_conv ? "conv" : "fc", l.spiking ? "yes" : "no",
                      static_cast<long long>(l.flops_ann), l.s_a, l.e_ann, l.e_snn);
        os << line;
    }
    std::snprintf(line, sizeof line, "total (T=%d): E_ann=%.1f pJ  E_snn=%.1f pJ  EE=%.3f  EE_conv=%.3f\n", T,
                  e_ann_total, e_snn_total, ee, ee_conv);
    os << line;
    return os.str();
}

}  // namespace snnwb
