import math
from dataclasses import replace

import numpy as np
import pytest

from sliptsim.link import (
    NoiseModel,
    channel_response,
    dc_operating_point,
    mismatch_study,
    run_link,
    snr_crossing_bandwidth,
    sweep,
)
from sliptsim.loading import bit_power_loading
from sliptsim.ofdm import OfdmConfig, SubcarrierSnr
from sliptsim.ppc import DiodeParams, IlluminationProfile, SegmentGeometry, SegmentedDevice
from sliptsim.presets import default_beam, default_receiver, default_transmitter

QUIET = NoiseModel(include_thermal=False, include_shot=False, quantization_snr_db=None)

FAST_CFG = OfdmConfig(fft_size=256, cp_length=5, sample_rate_hz=7.68e9)


def quiet_receiver(name="L4", cap_density=5e-12, **kwargs):
    return default_receiver(
        name,
        diode=DiodeParams(capacitance_density_f_mm2=cap_density),
        noise=QUIET,
        effective_series_resistance_ohm=kwargs.pop("rs", 100.0),
        **kwargs,
    )


class TestTransmitter:
    def test_waveform_stays_linear_at_nominal_drive(self):
        tx = default_transmitter()
        drive = np.linspace(-0.5, 0.5, 101)
        power, clipped = tx.optical_waveform(drive)
        assert clipped == 0.0
        assert power.min() > 0
        assert power.mean() == pytest.approx(tx.emitted_power_w, rel=1e-12)

    def test_overdrive_clips_and_flags(self):
        tx = default_transmitter()
        drive = np.linspace(-5, 5, 1001)
        power, clipped = tx.optical_waveform(drive)
        assert clipped > 0
        assert power.min() == 0.0
        assert power.max() == 2 * tx.emitted_power_w


class TestChannelResponse:
    def test_dc_gain_and_corner(self):
        chain = quiet_receiver()
        gains, f3db = channel_response(chain, FAST_CFG)
        g = chain.beam.responsivity_a_w * chain.ac_load_ohm
        freqs = FAST_CFG.carrier_frequencies_hz()
        k3 = np.argmin(np.abs(freqs - f3db))
        assert abs(gains[0]) == pytest.approx(g, rel=1e-3)  # first carrier ~ DC
        if freqs[0] < f3db < freqs[-1]:
            expected = g / math.sqrt(1 + (freqs[k3] / f3db) ** 2)
            assert abs(gains[k3]) == pytest.approx(expected, rel=1e-12)

    def test_ac_load_is_parallel_combination(self):
        chain = quiet_receiver()
        assert chain.ac_load_ohm == pytest.approx(950 * 50 / 1000, rel=1e-12)

    def test_bandwidth_crossing_interpolation(self):
        freqs = np.array([1.0, 2.0, 3.0, 4.0])
        snr = SubcarrierSnr(np.array([4.0, 2.0, 0.5, 0.1]), np.ones(4, bool))
        bw = snr_crossing_bandwidth(snr, freqs)
        assert 2.0 < bw < 3.0
        none = SubcarrierSnr(np.full(4, 0.5), np.ones(4, bool))
        assert snr_crossing_bandwidth(none, freqs) == 0.0
        alla = SubcarrierSnr(np.full(4, 5.0), np.ones(4, bool))
        assert snr_crossing_bandwidth(alla, freqs) == 4.0


class TestDcOperatingPoint:
    def test_load_line_intersection(self):
        device = SegmentedDevice(
            SegmentGeometry(2.08, 4), DiodeParams(shunt_resistance_ohm=2e5)
        )
        ph = [2e-4] * 4
        op = dc_operating_point(device, ph, 950.0)
        assert op.voltage_v == pytest.approx(op.current_a * 950.0, rel=1e-9)
        assert 0 < op.current_a <= 2e-4 + 5e-5

    def test_dark_device(self):
        device = SegmentedDevice(SegmentGeometry(1.0, 2))
        op = dc_operating_point(device, [0.0, 0.0], 950.0)
        assert op.power_w == 0.0


class TestRunLink:
    def test_noiseless_link_error_free(self):
        # gentle drive keeps the waveform strictly inside the laser's linear
        # window, so the only impairment left is the modem's own EVM floor
        tx = replace(default_transmitter(), drive_vpp=0.4)
        report = run_link(
            tx,
            quiet_receiver(cap_density=1e-15),  # corner far above the band
            replace(FAST_CFG, clip_sigma=None),
            seed=3,
            n_measurement_frames=20,
            n_payload_frames=6,
        )
        assert report.clip_fraction == 0.0
        assert report.ber == 0.0
        assert report.data_rate_bps > 0

    def test_deterministic_given_seed(self):
        cfg = FAST_CFG
        kwargs = dict(n_measurement_frames=12, n_payload_frames=4)
        a = run_link(default_transmitter(), quiet_receiver(), cfg, seed=9, **kwargs)
        b = run_link(default_transmitter(), quiet_receiver(), cfg, seed=9, **kwargs)
        assert a.csv_row() == b.csv_row()
        assert np.array_equal(a.snr.snr_linear, b.snr.snr_linear)
        assert np.array_equal(a.plan.bits, b.plan.bits)

    def test_report_fields_populated(self):
        report = run_link(
            default_transmitter(), quiet_receiver(), FAST_CFG, seed=1,
            n_measurement_frames=12, n_payload_frames=4,
        )
        assert report.f3db_hz > 0
        assert report.pmp_w > 0
        assert 0 < report.imp_isc <= 1
        assert report.harvested_w > 0
        assert report.pce_emitted > 0 and report.pce_incident > report.pce_emitted
        assert report.operating_voltage_v == pytest.approx(
            report.operating_current_a * 950.0, rel=1e-9
        )

    def test_miniature_link_rate_arithmetic(self):
        # 15-carrier modem: the reported rate must equal the hand formula
        cfg = OfdmConfig(fft_size=32, cp_length=5, sample_rate_hz=1e9,
                         clip_sigma=None)
        report = run_link(
            default_transmitter(), quiet_receiver(), cfg, seed=2,
            n_measurement_frames=30, n_payload_frames=8,
        )
        expected = report.plan.total_bits * 1e9 / ((32 + 5) * 4)
        assert report.data_rate_bps == pytest.approx(expected, rel=1e-12)

    def test_17db_flat_snr_loads_four_bits(self):
        plan = bit_power_loading(np.full(64, 10 ** 1.7), 4.7e-3)
        assert np.all(plan.bits >= 4)

    def test_noise_psd_doubling_costs_3db(self):
        # noise-dominated regime: flat channel, no clipping, strong PSD
        cfg = OfdmConfig(fft_size=64, cp_length=5, sample_rate_hz=7.68e9,
                         clip_sigma=None)
        base_psd = 6e-21

        def profile(psd):
            noise = NoiseModel(
                include_thermal=False, include_shot=False,
                quantization_snr_db=None, extra_current_psd_a2_hz=psd,
            )
            chain = replace(quiet_receiver(cap_density=1e-15), noise=noise)
            report = run_link(
                default_transmitter(), chain, cfg, seed=4,
                n_measurement_frames=20000, n_payload_frames=1,
            )
            return report.snr

        a = profile(base_psd)
        b = profile(2 * base_psd)
        delta = a.db() - b.db()
        assert np.all(np.abs(delta - 3.0) <= 0.2)


class TestSweep:
    def test_empty(self):
        assert sweep([], default_transmitter(), FAST_CFG) == []

    def test_single_matches_run_link(self):
        chain = quiet_receiver()
        direct = run_link(default_transmitter(), chain, FAST_CFG, seed=5)
        swept = sweep([("L4", chain)], default_transmitter(), FAST_CFG, seed=5)
        assert len(swept) == 1
        assert swept[0].data_rate_bps == direct.data_rate_bps
        assert swept[0].ber == direct.ber

    def test_failure_recorded_not_raised(self):
        # beam misses the device entirely; with thermal noise on, the
        # receiver sees pure noise and synchronization fails for that row
        bad_beam = IlluminationProfile(2.3e-3, 1e-6, center_mm=(40.0, 0.0),
                                       responsivity_a_w=0.42)
        bad = replace(
            quiet_receiver(), beam=bad_beam,
            noise=NoiseModel(quantization_snr_db=None),
        )
        reports = sweep([("ok", quiet_receiver()), ("bad", bad)],
                        default_transmitter(), FAST_CFG, seed=1)
        assert reports[0].error == ""
        assert "Sync" in reports[1].error


class TestMismatch:
    def test_aligned_beam_matches_symmetric_ratio(self):
        device = SegmentedDevice(
            SegmentGeometry(2.08, 4, junction_area_mm2=0.93),
            DiodeParams(capacitance_density_f_mm2=5e-12),
        )
        beam = default_beam()
        rows = mismatch_study(device, beam, [0.0, 0.25, 0.5])
        offsets, ratios, pmps = zip(*rows)
        assert ratios[0] > 0.9
        assert pmps[0] >= pmps[1] >= pmps[2]
        assert ratios[0] >= ratios[1] >= ratios[2] - 1e-9
