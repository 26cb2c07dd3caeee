#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "snnwb/energy.hpp"
#include "snnwb/errors.hpp"
#include "test_util.hpp"

using namespace snnwb;

TEST_CASE("the energy table is internally consistent") {
    EnergyConstants c;
    CHECK(c.e_mult == 3.1);
    CHECK(c.e_add == 0.1);
    CHECK(c.e_mac == 3.2);
    CHECK(c.e_ac == 0.1);
    CHECK_NOTHROW(c.validate());
    CHECK(std::fabs(c.e_mac - (c.e_mult + c.e_add)) < 1e-12);

    EnergyConstants bad;
    bad.e_mac = 3.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("dense operation counts") {
    CHECK(flops_ann_conv(32, 64, 3, 64) == 37748736);
    CHECK(flops_ann_conv(1, 1, 1, 1) == 1);
    CHECK(flops_ann_fc(2048, 512) == 1048576);
}

TEST_CASE("event-driven counts scale with the firing fraction") {
    CHECK(flops_snn(100, 0.0) == 0.0);
    CHECK(flops_snn(100, 1.0) == 100.0);
    CHECK(flops_snn(37748736, 0.1) == doctest::Approx(3774873.6));
    CHECK_THROWS_AS(flops_snn(100, 1.5), InputError);
    CHECK_THROWS_AS(flops_snn(100, -0.1), InputError);
}

TEST_CASE("one dense multiply-accumulate costs one table entry") {
    std::vector<LayerProfile> layers = {{"only", false, 1, false, 1.0}};
    EnergyReport rep = total_energy(layers, 1, EnergyConstants{});
    CHECK(rep.e_ann_total == doctest::Approx(3.2));
}

TEST_CASE("a fully active one-op spiking layer over ten steps") {
    std::vector<LayerProfile> layers = {{"only", false, 1, true, 1.0}};
    EnergyReport rep = total_energy(layers, 10, EnergyConstants{});
    CHECK(rep.e_snn_total == doctest::Approx(1.0));
    CHECK(rep.ee == doctest::Approx(3.2));
}

TEST_CASE("swapping accumulate cost for multiply-accumulate collapses the ratio") {
    std::vector<LayerProfile> layers = {{"a", true, 1000, true, 1.0}, {"b", false, 64, true, 1.0}};
    EnergyConstants swapped;
    swapped.e_ac = swapped.e_mac;
    EnergyReport rep = total_energy(layers, 1, swapped);
    CHECK(rep.e_snn_total == doctest::Approx(rep.e_ann_total));
    CHECK(rep.ee == doctest::Approx(1.0));
}

TEST_CASE("the efficiency ratio ignores a common rescale of the constants") {
    std::vector<LayerProfile> layers = {{"a", true, 5000, true, 0.21}, {"b", false, 900, true, 0.07}};
    EnergyConstants base;
    EnergyReport r1 = total_energy(layers, 25, base);
    EnergyConstants doubled;
    doubled.e_mult *= 2;
    doubled.e_add *= 2;
    doubled.e_mac *= 2;
    doubled.e_ac *= 2;
    EnergyReport r2 = total_energy(layers, 25, doubled);
    CHECK(r1.ee == doctest::Approx(r2.ee).epsilon(1e-12));
    CHECK(r2.e_ann_total == doctest::Approx(2.0 * r1.e_ann_total));
}

TEST_CASE("spiking energy is linear in the time window") {
    std::vector<LayerProfile> layers = {{"a", true, 700, true, 0.33}, {"b", false, 50, true, 0.5}};
    EnergyReport r10 = total_energy(layers, 10, EnergyConstants{});
    EnergyReport r20 = total_energy(layers, 20, EnergyConstants{});
    EnergyReport r40 = total_energy(layers, 40, EnergyConstants{});
    CHECK(r20.e_snn_total == doctest::Approx(2.0 * r10.e_snn_total).epsilon(1e-12));
    CHECK(r40.e_snn_total == doctest::Approx(4.0 * r10.e_snn_total).epsilon(1e-12));
}

TEST_CASE("hand-evaluated two-layer fixture to six significant figures") {
    // conv: O=4, N=2, k=3, M=5 -> 16*2*9*5 = 1440 dense ops, firing fraction 0.25
    // fc:   20*7 = 140 dense ops, firing fraction 0.5, window T=20
    // dense side: (1440 + 140) * 3.2 = 5056 pJ
    // event side: (1440*0.25 + 140*0.5) * 0.1 * 20 = 860 pJ
    // ratio: 5056 / 860 = 5.87907
    std::vector<LayerProfile> layers = {{"conv", true, flops_ann_conv(4, 2, 3, 5), true, 0.25},
                                        {"fc", false, flops_ann_fc(20, 7), true, 0.5}};
    EnergyReport rep = total_energy(layers, 20, EnergyConstants{});
    CHECK(rep.layers[0].flops_ann == 1440);
    CHECK(rep.layers[1].flops_ann == 140);
    CHECK(rep.e_ann_total == doctest::Approx(5056.0).epsilon(1e-9));
    CHECK(rep.e_snn_total == doctest::Approx(860.0).epsilon(1e-9));
    CHECK(rep.ee == doctest::Approx(5056.0 / 860.0).epsilon(1e-6));
    CHECK(rep.ee == doctest::Approx(5.87907).epsilon(1e-6));
}

TEST_CASE("analog layers in a mixed net pay their dense cost once, not per step") {
    std::vector<LayerProfile> layers = {{"analog", true, 1000, false, 1.0}, {"spiking", true, 1000, true, 0.1}};
    EnergyReport rep = total_energy(layers, 50, EnergyConstants{});
    // 1000*3.2 once, plus 1000*0.1*0.1*50.
    CHECK(rep.e_snn_total == doctest::Approx(1000.0 * 3.2 + 1000.0 * 0.1 * 0.1 * 50.0).epsilon(1e-9));
}

TEST_CASE("conv-only and full ratios split hybrid stacks") {
    std::vector<LayerProfile> layers = {{"conv", true, 10000, true, 0.05}, {"fc", false, 10000, false, 1.0}};
    EnergyReport rep = total_energy(layers, 100, EnergyConstants{});
    // Spiking conv: 10000*0.05*0.1*100 = 5000; dense conv: 32000.
    CHECK(rep.ee_conv == doctest::Approx(32000.0 / 5000.0).epsilon(1e-9));
    CHECK(rep.ee_full == doctest::Approx((32000.0 + 32000.0) / (5000.0 + 32000.0)).epsilon(1e-9));
    CHECK(rep.ee_conv > rep.ee_full);
    const std::string table = rep.to_table();
    CHECK(table.find("EE") != std::string::npos);
    const std::string js = rep.to_json();
    CHECK(js.find("ee_conv") != std::string::npos);
}
