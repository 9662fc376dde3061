"""Data model, JSONL persistence, correction, and budget arithmetic."""

from __future__ import annotations

import json

import pytest

from labelvet.data import (
    AnnotationRecord,
    CorrectedDataset,
    CorrectedRecord,
    DataError,
    Dataset,
    Item,
    apply_correction,
    canonical_json,
    ideal_budget,
    load_dataset,
    read_jsonl,
    save_dataset,
    write_jsonl,
)

from conftest import machine_annotations, review_for, text_dataset, text_item


class TestItem:
    def test_text_item_roundtrip(self):
        item = text_item(3, truth=1)
        assert Item.from_record(item.to_record()) == item

    def test_content_kinds(self):
        Item(0, {"kind": "image", "path": "img/0.png"}, ("a", "b"))
        Item(0, {"kind": "vqa", "question": "what?", "image": "img/0.png"}, ("a", "b"))
        Item(0, {"kind": "features", "values": [0.1, -0.2]}, ("a", "b"))
        with pytest.raises(DataError):
            Item(0, {"kind": "audio", "path": "x.wav"}, ("a", "b"))
        with pytest.raises(DataError):
            Item(0, {"kind": "text"}, ("a", "b"))

    def test_label_space_minimum(self):
        with pytest.raises(DataError):
            Item(0, {"kind": "text", "text": "x"}, ("only",))

    def test_hidden_truth_range(self):
        with pytest.raises(DataError):
            Item(0, {"kind": "text", "text": "x"}, ("a", "b"), hidden_truth=2)


class TestDataset:
    def test_three_valid_records(self, tmp_path):
        path = tmp_path / "data.jsonl"
        save_dataset(text_dataset(3), path)
        assert load_dataset(path).n == 3

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "data.jsonl"
        records = [text_item(0).to_record(), text_item(7).to_record(),
                   text_item(7).to_record()]
        write_jsonl(path, records)
        with pytest.raises(DataError, match="duplicate"):
            load_dataset(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text("")
        with pytest.raises(DataError):
            load_dataset(path)

    def test_ids_must_cover_range(self):
        with pytest.raises(DataError):
            Dataset((text_item(0), text_item(2)))

    def test_getitem_by_id(self):
        dataset = text_dataset(5)
        assert dataset[4].item_id == 4


class TestJsonl:
    def test_canonical_json_is_sorted_and_compact(self):
        assert canonical_json({"b": 1, "a": [2, 3]}) == '{"a":[2,3],"b":1}'

    def test_write_read_roundtrip(self, tmp_path):
        path = tmp_path / "r.jsonl"
        records = [{"schema_version": 1, "item_id": i} for i in range(4)]
        assert write_jsonl(path, records) == 4
        assert read_jsonl(path) == records

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"schema_version": 1}\nnot json\n')
        with pytest.raises(DataError, match=":2:"):
            read_jsonl(path)

    def test_schema_version_checked(self, tmp_path):
        path = tmp_path / "v.jsonl"
        path.write_text(json.dumps({"schema_version": 99}) + "\n")
        with pytest.raises(DataError, match="schema_version"):
            read_jsonl(path)

    def test_atomic_write_leaves_no_tmp(self, tmp_path):
        path = tmp_path / "a.jsonl"
        write_jsonl(path, [{"schema_version": 1}])
        assert [p.name for p in tmp_path.iterdir()] == ["a.jsonl"]


class TestApplyCorrection:
    def _annotations(self, labels):
        dataset = text_dataset(len(labels))
        return machine_annotations(dataset, labels)

    def test_no_reviews_keeps_machine_labels(self):
        annotations = self._annotations([1, 2, 3])
        corrected = apply_correction(annotations, [0.5, 0.5, 0.5], [0, 0, 0],
                                     [0.2, 0.2, 0.2], [])
        assert corrected.final_labels() == [1, 2, 3]
        assert all(r.source == "machine" for r in corrected)

    def test_all_reviewed_takes_human_labels(self):
        annotations = self._annotations([1, 2, 3])
        reviews = [review_for(0, 1), review_for(1, 0), review_for(2, 3)]
        corrected = apply_correction(annotations, [1, 1, 1], [1, 1, 1],
                                     [0.9, 0.9, 0.9], reviews)
        assert corrected.final_labels() == [1, 0, 3]
        assert all(r.source == "human" for r in corrected)

    def test_partial_selection(self):
        annotations = self._annotations([1, 2, 3])
        corrected = apply_correction(annotations, [0, 1, 0], [0, 1, 0],
                                     [0.1, 0.9, 0.1], [review_for(1, 0)])
        assert corrected.final_labels() == [1, 0, 3]
        assert [r.reviewed for r in corrected] == [0, 1, 0]

    def test_selected_without_review_is_error(self):
        annotations = self._annotations([1, 2, 3])
        with pytest.raises(DataError, match="no review"):
            apply_correction(annotations, [0, 1, 0], [0, 1, 0],
                             [0.1, 0.9, 0.1], [])

    def test_machine_label_is_preserved_on_override(self):
        annotations = self._annotations([1, 2, 3])
        corrected = apply_correction(annotations, [0, 1, 0], [0, 1, 0],
                                     [0.1, 0.9, 0.1], [review_for(1, 0)])
        record = corrected.records[1]
        assert record.final_label == 0 and record.machine_label == 2

    def test_length_mismatch_rejected(self):
        annotations = self._annotations([1, 2, 3])
        with pytest.raises(DataError):
            apply_correction(annotations, [1, 1], [0, 0, 0], [0, 0, 0], [])


class TestCorrectedRecordValidation:
    def test_source_reviewed_consistency(self):
        with pytest.raises(DataError):
            CorrectedRecord(item_id=0, final_label=1, source="human",
                            machine_label=1, review_prob=1.0, reviewed=0,
                            error_estimate=0.5)

    def test_sorted_unique_ids_required(self):
        good = CorrectedRecord(item_id=0, final_label=1, source="machine",
                               machine_label=1, review_prob=0.0, reviewed=0,
                               error_estimate=0.0)
        with pytest.raises(DataError):
            CorrectedDataset((good, good))


class TestIdealBudget:
    def test_published_budget_fraction(self):
        assert ideal_budget(0.8848, 50000) == 5760

    def test_perfect_annotator_needs_nothing(self):
        assert ideal_budget(1.0, 1000) == 0

    def test_buffer_adds_reviews(self):
        assert ideal_budget(0.8848, 50000, buffer=0.10) == 10760

    def test_float_artifact_guard(self):
        # 0.12 * 50000 is 6000.000000000001 in floats; the budget must not
        # round that up to 6001.
        assert ideal_budget(0.88, 50000) == 6000

    def test_clamped_to_n(self):
        assert ideal_budget(0.0, 10, buffer=0.5) == 10

    def test_validation(self):
        with pytest.raises(DataError):
            ideal_budget(1.2, 10)
        with pytest.raises(DataError):
            ideal_budget(0.5, 0)
        with pytest.raises(DataError):
            ideal_budget(0.5, 10, buffer=-0.1)
