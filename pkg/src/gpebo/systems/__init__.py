"""Example plants with closed-form observer mappings."""
