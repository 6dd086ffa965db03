import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='InstanceRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(blank=True, max_length=128)),
                ('fingerprint', models.CharField(db_index=True, help_text='Hash of (C, A, s) used to match reports to instances.', max_length=16)),
                ('d', models.PositiveIntegerField()),
                ('n', models.PositiveIntegerField()),
                ('s', models.PositiveIntegerField()),
                ('payload', models.JSONField(help_text='Instance document {d, n, s, C, A, meta}.')),
                ('meta', models.JSONField(blank=True, default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='RunRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(max_length=32)),
                ('descriptor', models.JSONField(blank=True, default=dict)),
                ('seed', models.BigIntegerField(blank=True, null=True)),
                ('config', models.JSONField(blank=True, default=dict)),
                ('results', models.JSONField(blank=True, default=dict)),
                ('status', models.CharField(choices=[('ok', 'Completed'), ('optimal', 'Solved to optimality'), ('time_limit', 'Time limit reached'), ('node_limit', 'Node limit reached')], default='ok', max_length=16)),
                ('objective', models.FloatField(blank=True, null=True)),
                ('bound', models.FloatField(blank=True, null=True)),
                ('wall_time', models.FloatField(default=0.0)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('instance', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, related_name='runs', to='fusion.instancerecord')),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
    ]
