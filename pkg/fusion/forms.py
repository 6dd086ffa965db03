from django import forms

from .exact import BnbConfig


class BnbConfigForm(forms.Form):
    """
    Validates merged solver configuration (settings defaults, config file, flags).
    """
    time_limit = forms.FloatField(min_value=0.0)
    node_limit = forms.IntegerField(min_value=1)
    gap_tol = forms.FloatField(min_value=0.0)
    fw_root_iters = forms.IntegerField(min_value=1)
    fw_node_iters = forms.IntegerField(min_value=1)
    fw_probe_iters = forms.IntegerField(min_value=1)
    fw_tol = forms.FloatField()
    dive_every = forms.IntegerField(min_value=0)
    gradient_cuts = forms.BooleanField(required=False)
    submodular_cuts = forms.BooleanField(required=False)
    optimality_cuts = forms.BooleanField(required=False)
    xi0 = forms.FloatField(min_value=0.0, max_value=1.0)
    xi1 = forms.FloatField(min_value=0.0, max_value=1.0)
    pair_budget_factor = forms.IntegerField(min_value=0)
    sm_refresh = forms.IntegerField(min_value=1)
    threads = forms.IntegerField(min_value=1)

    def clean_fw_tol(self):
        """
        Frank-Wolfe tolerance must be positive; a zero tolerance never stops early.
        """
        tol = self.cleaned_data["fw_tol"]
        if tol <= 0.0:
            raise forms.ValidationError("Frank-Wolfe tolerance must be positive.")
        return tol

    def clean(self):
        """
        Checks the probing thresholds leave a gap between "near zero" and "near one".
        """
        cleaned = super().clean()
        xi0, xi1 = cleaned.get("xi0"), cleaned.get("xi1")
        if xi0 is not None and xi1 is not None and xi0 >= xi1:
            raise forms.ValidationError("xi0 must be smaller than xi1.")
        return cleaned

    def to_config(self):
        """
        Builds the BnbConfig; call only after is_valid().
        """
        return BnbConfig(**self.cleaned_data)

    def error_text(self):
        parts = []
        for field, errors in self.errors.items():
            label = "config" if field == "__all__" else field
            parts.append(f"{label}: {' '.join(errors)}")
        return "; ".join(parts)
