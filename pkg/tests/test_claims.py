import io
import json

import numpy as np
import pytest

from system_claims import (
    ClaimConflictError,
    ClaimError,
    ClaimFormat,
    ClaimParseError,
    ClaimSet,
    ObjectDomain,
    column_sources,
    load_domains,
    parse_claims,
    serialize_claims,
)
from storage import read_claims


def test_parse_indexes_by_first_appearance(small_claims):
    assert small_claims.source_ids == ('s1', 's2', 's3', 's4')
    assert small_claims.object_ids == ('o1', 'o2', 'o3')
    assert small_claims.objects[0].labels == ('yes', 'no')
    assert small_claims.objects[1].labels == ('no', 'yes')
    assert small_claims.num_claims == 8
    np.testing.assert_array_equal(small_claims.domain_sizes, [2, 2, 2])


def test_header_is_optional(small_csv):
    without_header = small_csv.split('\n', 1)[1]
    assert parse_claims(without_header) == parse_claims(small_csv)


def test_leading_comment_lines_are_skipped(small_csv):
    commented = '# config: {"seed":1}\n# another\n' + small_csv
    assert parse_claims(commented) == parse_claims(small_csv)


def test_quoted_fields_follow_rfc4180():
    cs = parse_claims('source_id,object_id,value_label\n"s,1",o1,"Smith, J."\n')
    assert cs.source_ids == ('s,1',)
    assert cs.objects[0].labels == ('Smith, J.',)


def test_labels_are_matched_byte_exact():
    cs = parse_claims('a,o1,Smith\nb,o1,smith\nc,o1,Smith \n')
    assert cs.objects[0].labels == ('Smith', 'smith', 'Smith ')


def test_duplicate_pair_is_a_conflict(small_csv):
    with pytest.raises(ClaimConflictError) as info:
        parse_claims(small_csv + 's1,o1,no\n')
    assert 'line 10' in str(info.value)
    assert 'first on line 2' in str(info.value)


def test_wrong_field_count_reports_line():
    with pytest.raises(ClaimParseError) as info:
        parse_claims('source_id,object_id,value_label\ns1,o1,a\ns2,o1\n')
    assert info.value.line == 3


def test_byte_order_mark_before_header_is_ignored():
    cs = parse_claims('\ufeffsource_id,object_id,value_label\ns1,b1,A\ns2,b1,B\n')
    assert cs.num_claims == 2
    assert cs.source_ids == ('s1', 's2')
    assert cs.object_ids == ('b1',)


def test_claim_file_with_byte_order_mark(tmp_path):
    path = tmp_path / 'claims.csv'
    path.write_text('source_id,object_id,value_label\ns1,b1,A\n', encoding='utf-8-sig')
    cs = read_claims(path)
    assert cs.source_ids == ('s1',)
    assert cs.objects[0].labels == ('A',)


def test_empty_field_is_rejected():
    with pytest.raises(ClaimParseError):
        parse_claims('s1,,a\n')


def test_empty_input_is_an_error():
    with pytest.raises(ClaimError):
        parse_claims('source_id,object_id,value_label\n')


def test_json_format_matches_csv(small_csv, small_claims):
    rows = [line.split(',') for line in small_csv.strip().splitlines()[1:]]
    payload = json.dumps([{'source': s, 'object': o, 'value': v} for s, o, v in rows])
    assert parse_claims(payload, ClaimFormat.JSON) == small_claims


def test_json_missing_key_reports_position():
    with pytest.raises(ClaimParseError) as info:
        parse_claims('[{"source": "s1", "object": "o1", "value": "a"}, {"source": "s1"}]', 'json')
    assert info.value.line is None
    assert info.value.claim == 2
    assert str(info.value).startswith('claim #2:')


def test_json_duplicate_reports_claim_positions():
    payload = json.dumps([{'source': 's1', 'object': 'o1', 'value': v} for v in ('a', 'b')])
    with pytest.raises(ClaimConflictError) as info:
        parse_claims(payload, ClaimFormat.JSON)
    assert str(info.value).startswith('claim #2:')
    assert 'first on claim #1' in str(info.value)


def test_domain_file_adds_unclaimed_labels_and_objects(small_csv):
    domains = load_domains(io.StringIO(json.dumps({'o1': ['maybe', 'no'], 'o9': ['x', 'y', 'z']})))
    cs = parse_claims(small_csv, domains=domains)
    assert cs.objects[0].labels == ('maybe', 'no', 'yes')
    assert cs.object_ids[-1] == 'o9'
    assert cs.column_sources(cs.num_objects - 1) == frozenset()
    assert cs.domain_sizes.tolist() == [3, 2, 2, 3]


def test_domain_file_must_map_to_lists():
    with pytest.raises(ClaimParseError):
        load_domains(io.StringIO('{"o1": "a"}'))


@pytest.mark.parametrize('fmt', [ClaimFormat.CSV, ClaimFormat.JSON])
def test_serialize_then_parse_is_identity(small_claims, fmt):
    assert parse_claims(serialize_claims(small_claims, fmt), fmt) == small_claims


def test_column_index_matches_linear_scan(small_claims):
    for m in range(small_claims.num_objects):
        expected = {c.source_index for c in small_claims.claims if c.object_index == m}
        assert column_sources(small_claims, m) == expected


def test_row_index_matches_linear_scan(small_claims):
    for n in range(small_claims.num_sources):
        expected = {c.object_index for c in small_claims.claims if c.source_index == n}
        assert small_claims.row_objects(n) == expected


def test_index_out_of_range(small_claims):
    with pytest.raises(ClaimError):
        small_claims.column_sources(small_claims.num_objects)
    with pytest.raises(ClaimError):
        small_claims.row_objects(-1)


def test_value_mask_marks_domain_slots():
    objects = [ObjectDomain('o1', ('a', 'b')), ObjectDomain('o2', ('a', 'b', 'c'))]
    cs = ClaimSet.from_indices(['s1'], objects, [(0, 0, 1), (0, 1, 2)])
    np.testing.assert_array_equal(cs.value_mask, [[True, True, False], [True, True, True]])
    assert cs.max_domain == 3


def test_claim_set_rejects_value_outside_domain():
    with pytest.raises(ClaimError):
        ClaimSet.from_indices(['s1'], [ObjectDomain('o1', ('a', 'b'))], [(0, 0, 2)])


def test_claim_set_rejects_duplicate_pairs_from_indices():
    with pytest.raises(ClaimConflictError):
        ClaimSet.from_indices(['s1'], [ObjectDomain('o1', ('a', 'b'))], [(0, 0, 0), (0, 0, 1)])


def test_claim_arrays_are_read_only(small_claims):
    with pytest.raises(ValueError):
        small_claims.claim_values[0] = 1


def test_row_order_groups_claims_by_source(small_claims):
    ordered = small_claims.claim_sources[small_claims.row_order]
    assert np.all(np.diff(ordered) >= 0)


def test_object_domain_rejects_duplicates():
    with pytest.raises(ClaimError):
        ObjectDomain('o1', ('a', 'a'))


def test_summary_reports_density(small_claims):
    summary = small_claims.summary()
    assert summary['claims'] == 8
    assert summary['density'] == pytest.approx(8 / 12)


def test_empty_claim_set_is_constructible(empty_claims):
    assert empty_claims.num_claims == 0
    assert empty_claims.max_domain == 1
