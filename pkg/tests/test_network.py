import logging

import pytest

from fairleak import bundled_data
from fairleak.network import (
    GroupAssignment,
    NetworkError,
    ParseError,
    SensorSet,
    assign_groups,
    load_group_config,
    parse_inp,
    parse_inp_file,
    serialize_inp,
)

MINIMAL = """\
[RESERVOIRS]
1 50.0
[JUNCTIONS]
2 0.0 0.01
[PIPES]
1 1 2 100.0 0.2 130.0
"""


def test_hanoi_fixture_counts():
    net = parse_inp_file(bundled_data("hanoi.inp"))
    assert len(net.nodes) == 31
    assert len(net.reservoirs) == 1
    assert len(net.nodes) + len(net.reservoirs) == 32
    assert len(net.pipes) == 34


def test_minimal_network():
    net = parse_inp(MINIMAL)
    assert net.node_count == 2
    assert len(net.pipes) == 1


def test_dangling_endpoint_names_pipe_and_node():
    text = MINIMAL.replace("1 1 2 100.0", "1 1 99 100.0")
    with pytest.raises(NetworkError, match=r"pipe 1 .*99"):
        parse_inp(text)


def test_round_trip_identical(tiny_net):
    assert parse_inp(serialize_inp(tiny_net), name="tiny") == tiny_net
    hanoi = parse_inp_file(bundled_data("hanoi.inp"))
    assert parse_inp(serialize_inp(hanoi), name="hanoi") == hanoi


def test_disconnected_graph_rejected():
    text = MINIMAL + "[JUNCTIONS]\n3 0.0 0.0\n"
    with pytest.raises(NetworkError, match="disconnected"):
        parse_inp(text)


def test_duplicate_node_id_rejected():
    text = MINIMAL + "[JUNCTIONS]\n2 0.0 0.0\n"
    with pytest.raises(NetworkError, match="duplicate"):
        parse_inp(text)


def test_malformed_line_reports_line_number():
    text = "[JUNCTIONS]\n2 zero 0.01\n"
    with pytest.raises(ParseError, match="line 2"):
        parse_inp(text)


def test_data_before_section_rejected():
    with pytest.raises(ParseError, match="line 1"):
        parse_inp("2 0.0 0.01\n")


def test_unknown_section_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="fairleak.network"):
        parse_inp("[OPTIONS]\nUNITS CMS\n" + MINIMAL)
    assert any("OPTIONS" in record.message for record in caplog.records)


def test_negative_demand_rejected():
    with pytest.raises(NetworkError, match="nonnegative"):
        parse_inp(MINIMAL.replace("2 0.0 0.01", "2 0.0 -0.01"))


def test_default_hanoi_grouping():
    net = parse_inp_file(bundled_data("hanoi.inp"))
    groups, sensors = load_group_config(bundled_data("hanoi_groups.cfg"))
    assignment = assign_groups(net, groups)
    assert assignment.group_count == 3
    assert len(assignment.node_to_group) == 31
    assert sensors.node_ids == (3, 10, 25)
    # one sensor per group
    sensor_groups = {assignment.group_of(s) for s in sensors.node_ids}
    assert sensor_groups == {1, 2, 3}


def test_single_group_assignment(tiny_net):
    assignment = assign_groups(tiny_net, {1: list(tiny_net.junction_ids)})
    assert assignment.group_count == 1
    assert assignment.members(1) == tuple(sorted(tiny_net.junction_ids))


def test_group_omitting_junction_names_it(tiny_net):
    with pytest.raises(NetworkError, match=r"\[7\]"):
        assign_groups(tiny_net, {1: [2, 3, 4], 2: [5, 6]})


def test_overlapping_groups_rejected(tiny_net):
    with pytest.raises(NetworkError, match="node 3"):
        assign_groups(tiny_net, {1: [2, 3, 4], 2: [3, 5, 6, 7]})


def test_empty_group_rejected(tiny_net):
    with pytest.raises(NetworkError, match="group 2 is empty"):
        assign_groups(tiny_net, {1: list(tiny_net.junction_ids), 2: []})


def test_assignment_deterministic(tiny_net):
    spec = {1: [2, 3, 4], 2: [5, 6, 7]}
    assert assign_groups(tiny_net, spec) == assign_groups(tiny_net, spec)


def test_sensor_set_invariants(tiny_net):
    with pytest.raises(NetworkError):
        SensorSet((3,))
    with pytest.raises(NetworkError):
        SensorSet((3, 3))
    sensors = SensorSet((3, 5))
    sensors.validate_against(tiny_net)
    with pytest.raises(NetworkError, match="99"):
        SensorSet((3, 99)).validate_against(tiny_net)
    with pytest.raises(NetworkError, match="not a junction"):
        SensorSet((1, 3)).validate_against(tiny_net)
