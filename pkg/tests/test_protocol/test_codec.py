import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lima.protocol.codec import (
    DATA_OVERHEAD,
    UNSUPPORTED,
    CodecError,
    EdFrame,
    HeaderType,
    Ingress,
    InvalidOptLen,
    LimaFrame,
    LimaHeader,
    LorawanMType,
    MalformedLorawan,
    RemOptions,
    TransmissionProfile,
    Truncated,
    decapsulate,
    decode,
    derive_node_id,
    encapsulate,
    encode_header,
    format_frame,
    max_app_payload,
    quantize_snr,
    validate_ingress,
)
from lima.protocol.lorawan import LinkAdrReq, build_downlink
from lima.radio.region import EU868, US915
from tests.fixtures.frames import ED_ADDR, ed_uplink, ed_uplink_bytes, join_request, rem_header, uplink_header


def test_encapsulate_adds_exactly_eleven_bytes():
    inner = ed_uplink_bytes(app_bytes=25)
    frame = encapsulate(inner, uplink_header(0x0100, 7, 0x0010, ed_snr=-3, ed_sf=9))

    assert len(frame) == len(inner) + DATA_OVERHEAD == len(inner) + 11, "Data header must cost 11 bytes"
    assert frame[0] >> 5 == 0b111, "LIMA frames start with MType 0b111"


def test_decapsulate_restores_header_and_inner():
    inner = ed_uplink_bytes(fcnt=3)
    header = uplink_header(0x0100, 200, 0x0010, ed_snr=-12, ed_sf=11)

    got_header, got_inner = decapsulate(encapsulate(inner, header))

    assert got_header == header, f"Header mismatch: {got_header}"
    assert got_inner == inner, "Inner frame must be carried verbatim"


def test_decode_ed_uplink_fields():
    decoded = decode(ed_uplink_bytes(dev_addr=0x26011234, fcnt=42, app_bytes=10))

    assert isinstance(decoded, EdFrame), "LoRaWAN frame must not decode as LIMA"
    view = decoded.view
    assert view.mtype == LorawanMType.UNCONFIRMED_DATA_UP
    assert view.dev_addr == 0x26011234
    assert view.fcnt == 42
    assert view.fport == 1
    assert len(view.frm_payload) == 10
    assert view.adr, "ADR bit should be set by default"


def test_decode_join_request_carries_dev_eui():
    view = join_request(dev_eui=0x70B3D57ED0001234)

    assert view.mtype == LorawanMType.JOIN_REQUEST
    assert view.dev_eui == 0x70B3D57ED0001234
    assert view.device_key == ("eui", 0x70B3D57ED0001234), "JOIN-REQUEST routes by DevEUI"


def test_rem_options_encode_receivables():
    header = rem_header(0x0010, 5, 0x0101, cost=300, receivables=(0x26000001, 0x26000002))
    decoded = decode(encode_header(header))

    assert isinstance(decoded, LimaFrame)
    rem = decoded.header.rem_options()
    assert rem.cost_from_source == 300
    assert rem.direct_receivables == (0x26000001, 0x26000002)
    assert TransmissionProfile.from_code(rem.tp_code) == TransmissionProfile(sf=7, tx_power_dbm=26)
    assert decoded.header.opt_len == 3 + 2 * 4


def test_rem_capacity_by_byte_budget():
    assert RemOptions.capacity(19) == 4
    assert RemOptions.capacity(18) == 3
    assert RemOptions.capacity(2) == 0


def test_rem_cost_saturates_at_two_bytes():
    options = RemOptions(tp_code=0, cost_from_source=70000)
    assert RemOptions.decode(options.encode()).cost_from_source == 0xFFFF


@pytest.mark.parametrize("dr, expected", [(0, UNSUPPORTED), (1, 42), (2, 114), (3, 231), (4, 231)])
def test_max_app_payload_us915_lima(dr, expected):
    assert max_app_payload(dr, lima=True, plan=US915) == expected, f"DR{dr} cap"


@pytest.mark.parametrize("dr, expected", [(0, 11), (1, 53), (2, 125), (3, 242), (4, 242)])
def test_max_app_payload_us915_plain(dr, expected):
    assert max_app_payload(dr, lima=False, plan=US915) == expected


def test_max_app_payload_eu868_slow_rates_lose_eleven_bytes():
    assert max_app_payload(0, lima=True, plan=EU868) == 40
    assert max_app_payload(5, lima=True, plan=EU868) == 231


def test_validate_ingress_rejects_frames_that_cannot_be_encapsulated():
    fits = ed_uplink(app_bytes=40)   # MACPayload 48, M(DR1)=61, room 52
    too_big = ed_uplink(app_bytes=48)  # MACPayload 56

    assert validate_ingress(fits, 1, US915) == Ingress.OK
    assert validate_ingress(too_big, 1, US915) == Ingress.TOO_LARGE


def test_derive_node_id_xor_folds_words():
    eui = bytes.fromhex("0011223344556677")
    assert derive_node_id(eui) == 0x0011 ^ 0x2233 ^ 0x4455 ^ 0x6677


def test_derive_node_id_requires_eight_bytes():
    with pytest.raises(ValueError):
        derive_node_id(b"\x00" * 7)


@pytest.mark.parametrize("snr, expected", [(-7.5, -7), (-7.6, -8), (3.49, 3), (500.0, 127), (-500.0, -128)])
def test_quantize_snr(snr, expected):
    assert quantize_snr(snr) == expected


@pytest.mark.parametrize("sf, power", [(7, 26), (12, 14), (9, 2), (7, 30)])
def test_transmission_profile_code_round_trip(sf, power):
    tp = TransmissionProfile(sf=sf, tx_power_dbm=power)
    assert TransmissionProfile.from_code(tp.to_code()) == tp


def test_transmission_profile_ordering():
    stp = TransmissionProfile(sf=7, tx_power_dbm=26)
    assert TransmissionProfile(sf=7, tx_power_dbm=14).at_or_below(stp)
    assert not TransmissionProfile(sf=8, tx_power_dbm=14).at_or_below(stp)
    assert TransmissionProfile(sf=8, tx_power_dbm=14).higher_than(stp)


def test_decode_empty_is_truncated():
    with pytest.raises(Truncated):
        decode(b"")


def test_decode_short_lima_header_is_truncated():
    frame = encode_header(uplink_header(1, 1, 2))
    with pytest.raises(Truncated):
        decode(frame[:8])


def test_decode_options_past_end_is_truncated():
    frame = bytearray(encode_header(uplink_header(1, 1, 2)))
    frame[8] = 6
    with pytest.raises(Truncated):
        decode(bytes(frame))


def test_data_header_with_wrong_options_is_rejected():
    header = LimaHeader.data(HeaderType.UPLINK_DATA, source=1, seq=0, target=2)
    bad = LimaHeader(prefix=header.prefix, source=1, seq=0, sender=1, options=b"\x00\x02\x03")
    with pytest.raises(InvalidOptLen):
        encode_header(bad)


def test_rem_with_partial_receivable_is_rejected():
    frame = bytearray(encode_header(rem_header(1, 1, 1, receivables=(5,))))
    frame[8] = 5
    with pytest.raises(InvalidOptLen):
        decode(bytes(frame[:9 + 5]))


def test_short_lorawan_data_frame_is_malformed():
    with pytest.raises(MalformedLorawan):
        decode(ed_uplink_bytes()[:10])


@settings(max_examples=1000, deadline=None)
@given(st.binary(max_size=300))
def test_decode_arbitrary_bytes_only_raises_codec_errors(payload):
    try:
        decode(payload)
    except CodecError:
        pass


_ids = st.integers(0, 0xFFFF)

_data_headers = st.builds(
    LimaHeader.data,
    header_type=st.sampled_from([HeaderType.UPLINK_DATA, HeaderType.DOWNLINK_DATA]),
    source=_ids, seq=st.integers(0, 255), target=_ids,
    ed_snr=st.integers(-128, 127), ed_sf=st.integers(7, 12), version=st.integers(0, 7),
)
_rem_headers = st.builds(
    LimaHeader.rem,
    source=_ids, seq=st.integers(0, 255), sender=_ids,
    options=st.builds(RemOptions, tp_code=st.integers(0, 255), cost_from_source=_ids,
                      direct_receivables=st.lists(st.integers(0, 0xFFFFFFFF), max_size=10).map(tuple)),
    version=st.integers(0, 7),
)


@settings(max_examples=2000, deadline=None)
@given(st.one_of(_data_headers, _rem_headers))
def test_header_survives_encode_decode(header):
    decoded = decode(encode_header(header))

    assert isinstance(decoded, LimaFrame)
    assert decoded.header == header
    assert decoded.inner == b""


def test_format_frame_lima_summary():
    frame = encapsulate(ed_uplink_bytes(), uplink_header(0x0101, 9, 0x0010))
    lines = format_frame(decode(frame))

    assert lines[0] == "LIMA UplinkData, src=0x0101, seq=9, target=0x0010", f"Got: {lines[0]}"
    assert "sender=0x0101" in lines


def test_format_frame_lorawan_summary():
    lines = format_frame(decode(ed_uplink_bytes(dev_addr=ED_ADDR)))
    assert lines[0] == "LoRaWAN UnconfirmedDataUp, DevAddr=26000001", f"Got: {lines[0]}"


def test_link_adr_req_round_trip_through_downlink():
    command = LinkAdrReq(dr_index=5, power_index=4)
    view = decode(build_downlink(ED_ADDR, 0, command.encode())).view

    assert view.fport == 0
    assert LinkAdrReq.parse(view.frm_payload) == command
